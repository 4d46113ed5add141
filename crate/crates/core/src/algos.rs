//! Solver loops over the encoding: enumerating every stable matching,
//! climbing to a resident-Pareto-optimal one, and classifying the result.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::{self, blocking_clause, decode, domination_constraint, EncodeError};
use crate::model::{Instance, Matching};
use crate::satio::{Session, SolveStatus, SolverConfig};

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("solver gave no answer: {0}")]
    Unknown(String),
    #[error("matching is not stable: {0}")]
    NotStable(String),
    #[error("decoded model is not a stable matching: {0}")]
    Invariant(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnumStatus {
    Complete,
    LimitReached,
    /// The solver returned UNKNOWN; the set holds what was found before.
    Partial(String),
}

/// A set of stable matchings in canonical order, with RP_opt flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StableSet {
    matchings: Vec<Matching>,
    rp_opt: Vec<bool>,
    status: EnumStatus,
}

impl StableSet {
    /// Sorts, dedups and classifies.
    pub fn new(inst: &Instance, mut matchings: Vec<Matching>, status: EnumStatus) -> StableSet {
        matchings.sort();
        matchings.dedup();
        let mut set = StableSet {
            rp_opt: vec![false; matchings.len()],
            matchings,
            status,
        };
        classify(&mut set, inst);
        set
    }

    /// Takes flags computed elsewhere; pairs are sorted together.
    pub fn with_flags(members: Vec<(Matching, bool)>, status: EnumStatus) -> StableSet {
        let mut members = members;
        members.sort_by(|a, b| a.0.cmp(&b.0));
        members.dedup_by(|a, b| a.0 == b.0);
        let (matchings, rp_opt) = members.into_iter().unzip();
        StableSet {
            matchings,
            rp_opt,
            status,
        }
    }

    pub fn matchings(&self) -> &[Matching] {
        &self.matchings
    }

    pub fn rp_opt_flags(&self) -> &[bool] {
        &self.rp_opt
    }

    pub fn status(&self) -> &EnumStatus {
        &self.status
    }

    pub fn is_complete(&self) -> bool {
        self.status == EnumStatus::Complete
    }

    pub fn len(&self) -> usize {
        self.matchings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matchings.is_empty()
    }

    pub fn has_unique_matching(&self) -> bool {
        self.matchings.len() == 1
    }

    pub fn rp_opt_count(&self) -> usize {
        self.rp_opt.iter().filter(|&&f| f).count()
    }

    pub fn has_ropt(&self) -> bool {
        self.rp_opt_count() == 1
    }

    pub fn the_ropt(&self) -> Option<&Matching> {
        if !self.has_ropt() {
            return None;
        }
        self.rp_opt
            .iter()
            .position(|&f| f)
            .map(|i| &self.matchings[i])
    }

    pub fn position(&self, mu: &Matching) -> Option<usize> {
        self.matchings.binary_search(mu).ok()
    }

    pub fn is_rp_opt(&self, mu: &Matching) -> bool {
        self.position(mu).is_some_and(|i| self.rp_opt[i])
    }
}

/// Marks each member RP_opt iff no other member dominates it.
pub fn classify(set: &mut StableSet, inst: &Instance) {
    let ms = &set.matchings;
    set.rp_opt = (0..ms.len())
        .map(|i| !ms.iter().any(|other| inst.dominates(other, &ms[i])))
        .collect();
}

/// Solve, record, block, repeat. `limit` caps the number of matchings.
pub fn enumerate_all(
    inst: &Instance,
    limit: Option<usize>,
    cfg: &SolverConfig,
) -> Result<StableSet, AlgoError> {
    let (cnf, reg) = encode::encode(inst)?;
    let mut session = Session::new(cnf, cfg);
    let mut found = Vec::new();
    let status = loop {
        if limit.is_some_and(|l| found.len() >= l) {
            break EnumStatus::LimitReached;
        }
        let r = session.solve();
        match r.status {
            SolveStatus::Unsat => break EnumStatus::Complete,
            SolveStatus::Unknown => {
                break EnumStatus::Partial(r.diagnostic.unwrap_or_default());
            }
            SolveStatus::Sat => {
                let model = r.model.expect("SAT carries a model");
                let mu = decode(&model, &reg, inst)?;
                if !inst.is_stable(&mu) {
                    return Err(AlgoError::Invariant(mu.display(inst).to_string()));
                }
                session.add_clause(blocking_clause(&mu, &reg, inst)?);
                found.push(mu);
            }
        }
    };
    Ok(StableSet::new(inst, found, status))
}

/// First stable matching found, if any.
pub fn solve_one(inst: &Instance, cfg: &SolverConfig) -> Result<Option<Matching>, AlgoError> {
    let set = enumerate_all(inst, Some(1), cfg)?;
    match set.status() {
        EnumStatus::Partial(why) => Err(AlgoError::Unknown(why.clone())),
        _ => Ok(set.matchings().first().cloned()),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ParetoMode {
    /// Rebuild the formula around the current matching every step.
    #[default]
    Fresh,
    /// Keep one session and keep adding constraints. Sound because each
    /// step dominates the previous one, so older constraints are implied.
    Incremental,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Improvement {
    pub matching: Matching,
    /// Strictly improving steps taken.
    pub steps: usize,
    pub solves: usize,
}

/// Walks from a stable `mu` to an RP_opt matching that weakly dominates it.
pub fn pareto_improve(
    inst: &Instance,
    mu: &Matching,
    cfg: &SolverConfig,
    mode: ParetoMode,
) -> Result<Improvement, AlgoError> {
    if !inst.is_stable(mu) {
        return Err(AlgoError::NotStable(mu.display(inst).to_string()));
    }
    let (cnf, reg) = encode::encode(inst)?;
    let mut current = mu.clone();
    let mut steps = 0;
    let mut solves = 0;
    let mut session = None;
    loop {
        let s = match mode {
            ParetoMode::Fresh => session.insert(Session::new(cnf.clone(), cfg)),
            ParetoMode::Incremental => session.get_or_insert_with(|| Session::new(cnf.clone(), cfg)),
        };
        s.add_clause(blocking_clause(&current, &reg, inst)?);
        for c in domination_constraint(&current, &reg, inst)? {
            s.add_clause(c);
        }
        let r = s.solve();
        solves += 1;
        match r.status {
            SolveStatus::Unsat => {
                return Ok(Improvement {
                    matching: current,
                    steps,
                    solves,
                })
            }
            SolveStatus::Unknown => return Err(AlgoError::Unknown(r.diagnostic.unwrap_or_default())),
            SolveStatus::Sat => {
                let next = decode(&r.model.expect("SAT carries a model"), &reg, inst)?;
                if !inst.is_stable(&next) || !inst.dominates(&next, &current) {
                    return Err(AlgoError::Invariant(next.display(inst).to_string()));
                }
                current = next;
                steps += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    /// Mean zero-based rank of singles' outcomes; 0 without singles.
    pub singles_avg: f64,
    /// Mean zero-based rank of couples' joint outcomes; 0 without couples.
    pub couples_avg: f64,
    pub rp_opt: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: usize,
    /// Dominates `from`.
    pub to: usize,
    pub max_single_gain: usize,
    pub max_couple_gain: usize,
}

/// Dominance among stable matchings, transitively reduced. Node `i` is
/// `set.matchings()[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

fn mean(xs: &[usize]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<usize>() as f64 / xs.len() as f64
    }
}

fn max_gain(from: &[usize], to: &[usize]) -> usize {
    from.iter()
        .zip(to)
        .map(|(&a, &b)| a.saturating_sub(b))
        .max()
        .unwrap_or(0)
}

pub fn build_pareto_graph(set: &StableSet, inst: &Instance) -> ParetoGraph {
    let ms = set.matchings();
    let singles: Vec<Vec<usize>> = ms.iter().map(|m| inst.single_ranks(m)).collect();
    let couples: Vec<Vec<usize>> = ms.iter().map(|m| inst.couple_ranks(m)).collect();
    let nodes = (0..ms.len())
        .map(|i| GraphNode {
            singles_avg: mean(&singles[i]),
            couples_avg: mean(&couples[i]),
            rp_opt: set.rp_opt_flags()[i],
        })
        .collect();
    // dom[a][b]: b dominates a
    let dom: Vec<Vec<bool>> = (0..ms.len())
        .map(|a| (0..ms.len()).map(|b| inst.dominates(&ms[b], &ms[a])).collect())
        .collect();
    let mut edges = Vec::new();
    for a in 0..ms.len() {
        for b in 0..ms.len() {
            if !dom[a][b] {
                continue;
            }
            let composite = (0..ms.len()).any(|c| dom[a][c] && dom[c][b]);
            if !composite {
                edges.push(GraphEdge {
                    from: a,
                    to: b,
                    max_single_gain: max_gain(&singles[a], &singles[b]),
                    max_couple_gain: max_gain(&couples[a], &couples[b]),
                });
            }
        }
    }
    ParetoGraph { nodes, edges }
}

impl ParetoGraph {
    /// Weakly connected components.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
            parent[a] = b;
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// Graphviz source. RP_opt nodes are doubled circles; `highlight`
    /// (e.g. the DA result) is drawn as a box.
    pub fn to_dot(&self, highlight: Option<usize>) -> String {
        let mut out = String::from("digraph pareto {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let shape = if Some(i) == highlight {
                "box"
            } else if n.rp_opt {
                "doublecircle"
            } else {
                "ellipse"
            };
            let peripheries = if n.rp_opt { 2 } else { 1 };
            writeln!(
                out,
                "  m{i} [label=\"({:.4}, {:.4})\", shape={shape}, peripheries={peripheries}];",
                n.singles_avg, n.couples_avg
            )
            .unwrap();
        }
        for e in &self.edges {
            writeln!(
                out,
                "  m{} -> m{} [label=\"({}, {})\"];",
                e.from, e.to, e.max_single_gain, e.max_couple_gain
            )
            .unwrap();
        }
        out.push_str("}\n");
        out
    }
}

/// Unique `(from, to)` pairs of the dominance relation; handy for checks.
pub fn dominance_pairs(set: &StableSet, inst: &Instance) -> BTreeSet<(usize, usize)> {
    let ms = set.matchings();
    let mut out = BTreeSet::new();
    for a in 0..ms.len() {
        for b in 0..ms.len() {
            if inst.dominates(&ms[b], &ms[a]) {
                out.insert((a, b));
            }
        }
    }
    out
}
