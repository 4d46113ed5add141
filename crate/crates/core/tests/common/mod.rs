#![allow(dead_code)]

use smpc::gen::{generate, GenConfig};
use smpc::model::Instance;

/// Small random market for seed `s`: 3 to 8 doctors, 0 to 2 couples,
/// short lists, quota 2 on every fifth seed.
pub fn small_config(s: u64) -> GenConfig {
    let n = 3 + (s % 6) as usize;
    let couples = ((s / 6) % 3) as usize;
    let couples = couples.min(n / 2);
    let pairs = (n + 1) * (n + 1) - 1;
    GenConfig {
        n,
        couples_pct: (2 * couples) as f64 / n as f64,
        single_rol_len: n.min(2 + (s % 3) as usize),
        couple_rol_len: pairs.min(3 + (s % 4) as usize),
        quota: if s.is_multiple_of(5) { 2 } else { 1 },
        seed: s,
    }
}

pub fn small_corpus(count: u64) -> Vec<(u64, Instance)> {
    (0..count)
        .map(|s| (s, generate(&small_config(s)).expect("corpus config is valid")))
        .collect()
}
