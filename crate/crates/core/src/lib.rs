//! Stable matching with couples: a CNF encoding whose models are exactly
//! the stable matchings, solver loops for enumeration and Pareto
//! improvement, deferred-acceptance heuristics, a random market generator,
//! a brute-force oracle and a batch experiment harness.

pub mod algos;
pub mod bench;
pub mod da;
pub mod encode;
pub mod fixtures;
pub mod format;
pub mod gen;
pub mod model;
pub mod oracle;
pub mod satio;
