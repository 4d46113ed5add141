//! Random markets.
//!
//! `n` doctors and `n` programs. A fraction `x` of the doctors form
//! `x·n/2` couples; the rest are singles. Singles rank `single_rol_len`
//! distinct programs, couples rank `couple_rol_len` distinct pairs drawn
//! from `P⁺ × P⁺` without `(nil, nil)`, and every program ranks exactly the
//! doctors that ranked it, in random order.
//!
//! Randomness is ChaCha8 seeded from `seed`, with one stream per entity:
//! doctor `i` (or the couple whose first member is `i`) draws from stream
//! `i`, program `j` from stream `2³² + j`. Doctors are `r0..`, singles
//! first; programs are `p0..`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Couple, DoctorId, Instance, Program, ProgramId, ProgramRef, Single, NIL_PAIR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    /// Fraction of doctors in couples, in `[0, 1]`.
    pub couples_pct: f64,
    pub single_rol_len: usize,
    pub couple_rol_len: usize,
    pub quota: u32,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(n: usize, couples_pct: f64, seed: u64) -> GenConfig {
        GenConfig {
            n,
            couples_pct,
            single_rol_len: 5,
            couple_rol_len: 15,
            quota: 1,
            seed,
        }
    }

    /// Number of couples, once the config is valid.
    pub fn num_couples(&self) -> usize {
        (self.couples_pct * self.n as f64).round() as usize / 2
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if !(0.0..=1.0).contains(&self.couples_pct) {
            return Err(GenError::Fraction(self.couples_pct));
        }
        let in_couples = self.couples_pct * self.n as f64;
        let rounded = in_couples.round();
        if (in_couples - rounded).abs() > 1e-6 || !(rounded as usize).is_multiple_of(2) {
            return Err(GenError::OddCouples(in_couples));
        }
        if self.quota == 0 {
            return Err(GenError::Quota);
        }
        let singles = self.n - rounded as usize;
        if singles > 0 && self.single_rol_len > self.n {
            return Err(GenError::SingleRol(self.single_rol_len, self.n));
        }
        let pairs = (self.n + 1) * (self.n + 1) - 1;
        if rounded > 0.0 && self.couple_rol_len > pairs {
            return Err(GenError::CoupleRol(self.couple_rol_len, pairs));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("couple fraction {0} is outside [0, 1]")]
    Fraction(f64),
    #[error("x·n = {0} must be an even whole number")]
    OddCouples(f64),
    #[error("quota must be at least 1")]
    Quota,
    #[error("single ROL length {0} exceeds the {1} programs")]
    SingleRol(usize, usize),
    #[error("couple ROL length {0} exceeds the {1} available pairs")]
    CoupleRol(usize, usize),
}

/// `k` distinct indices below `size`, drawn uniformly with rejection of
/// repeats, in draw order.
pub fn sample_ordered_indices<R: Rng + ?Sized>(size: usize, k: usize, rng: &mut R) -> Vec<usize> {
    assert!(k <= size, "cannot draw {k} distinct items from {size}");
    let mut seen = HashSet::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.gen_range(0..size);
        if seen.insert(i) {
            out.push(i);
        }
    }
    out
}

/// A uniformly random ordered `k`-subset of `source`.
pub fn sample_ordered_list<T: Clone, R: Rng + ?Sized>(source: &[T], k: usize, rng: &mut R) -> Vec<T> {
    sample_ordered_indices(source.len(), k, rng)
        .into_iter()
        .map(|i| source[i].clone())
        .collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn generate(cfg: &GenConfig) -> Result<Instance, GenError> {
    cfg.validate()?;
    let n = cfg.n;
    let nc = cfg.num_couples();
    let ns = n - 2 * nc;
    let nil_index = n;
    let to_ref = |i: usize| {
        if i == nil_index {
            ProgramRef::Nil
        } else {
            ProgramRef::Program(ProgramId(i as u32))
        }
    };

    let mut rankers: Vec<Vec<DoctorId>> = vec![Vec::new(); n];
    let mut singles = Vec::with_capacity(ns);
    for i in 0..ns {
        let d = DoctorId(i as u32);
        let mut rng = stream(cfg.seed, i as u64);
        let mut rol: Vec<ProgramRef> = sample_ordered_indices(n, cfg.single_rol_len, &mut rng)
            .into_iter()
            .map(to_ref)
            .collect();
        for p in &rol {
            rankers[p.program().expect("drawn from P").index()].push(d);
        }
        rol.push(ProgramRef::Nil);
        singles.push(Single { doctor: d, rol });
    }

    let mut couples = Vec::with_capacity(nc);
    for k in 0..nc {
        let first = DoctorId((ns + 2 * k) as u32);
        let second = DoctorId((ns + 2 * k + 1) as u32);
        let mut rng = stream(cfg.seed, first.0 as u64);
        // Index (n+1)² − 1 is (nil, nil), left out of the draw range.
        let mut rol: Vec<(ProgramRef, ProgramRef)> =
            sample_ordered_indices((n + 1) * (n + 1) - 1, cfg.couple_rol_len, &mut rng)
                .into_iter()
                .map(|i| (to_ref(i / (n + 1)), to_ref(i % (n + 1))))
                .collect();
        for &(a, b) in &rol {
            for (p, d) in [(a, first), (b, second)] {
                if let Some(pid) = p.program() {
                    let r = &mut rankers[pid.index()];
                    if !r.contains(&d) {
                        r.push(d);
                    }
                }
            }
        }
        rol.push(NIL_PAIR);
        couples.push(Couple { first, second, rol });
    }

    let programs = rankers
        .into_iter()
        .enumerate()
        .map(|(j, mut who)| {
            who.sort_unstable();
            let mut rng = stream(cfg.seed, (1u64 << 32) + j as u64);
            let k = who.len();
            Program {
                name: format!("p{j}"),
                quota: cfg.quota,
                rol: sample_ordered_list(&who, k, &mut rng),
            }
        })
        .collect();

    let names = (0..n).map(|i| format!("r{i}")).collect();
    Ok(Instance::new(names, programs, singles, couples).expect("generated markets are well formed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::write_text;

    #[test]
    fn no_couples() {
        let inst = generate(&GenConfig::new(200, 0.0, 1)).unwrap();
        assert_eq!(inst.singles().len(), 200);
        assert!(inst.couples().is_empty());
        assert_eq!(inst.num_programs(), 200);
        assert!(inst.singles().iter().all(|s| s.rol.len() == 6));
    }

    #[test]
    fn twenty_percent() {
        let inst = generate(&GenConfig::new(200, 0.20, 5)).unwrap();
        assert_eq!(inst.couples().len(), 20);
        assert_eq!(inst.singles().len(), 160);
        for c in inst.couples() {
            assert_eq!(c.rol.len(), 16);
            assert_eq!(*c.rol.last().unwrap(), NIL_PAIR);
            assert!(!c.rol[..15].contains(&NIL_PAIR));
        }
        assert!(inst.programs().iter().all(|p| p.quota == 1));
    }

    #[test]
    fn programs_rank_exactly_their_rankers() {
        let inst = generate(&GenConfig::new(50, 0.2, 9)).unwrap();
        assert!(inst.is_preprocessed());
        assert_eq!(inst.preprocess(), inst);
        for p in inst.program_ids() {
            for d in inst.doctors() {
                let mentions = inst.ranked(d).contains(&ProgramRef::Program(p));
                assert_eq!(mentions, inst.acceptable_to(p, d));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = write_text(&generate(&GenConfig::new(100, 0.1, 42)).unwrap());
        let b = write_text(&generate(&GenConfig::new(100, 0.1, 42)).unwrap());
        let c = write_text(&generate(&GenConfig::new(100, 0.1, 43)).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            generate(&GenConfig::new(10, 0.1, 0)),
            Err(GenError::OddCouples(_))
        ));
        assert!(matches!(generate(&GenConfig::new(10, 1.5, 0)), Err(GenError::Fraction(_))));
        assert!(matches!(generate(&GenConfig::new(4, 0.0, 0)), Err(GenError::SingleRol(5, 4))));
        let mut cfg = GenConfig::new(2, 1.0, 0);
        cfg.couple_rol_len = 9;
        assert!(matches!(generate(&cfg), Err(GenError::CoupleRol(9, 8))));
        cfg.couple_rol_len = 8;
        assert!(generate(&cfg).is_ok());
        cfg.quota = 0;
        assert_eq!(generate(&cfg), Err(GenError::Quota));
    }

    #[test]
    fn sample_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_ordered_list(&[1, 2, 3], 0, &mut rng).is_empty());
        let mut all = sample_ordered_list(&[1, 2, 3, 4], 4, &mut rng);
        all.sort_unstable();
        assert_eq!(all, vec![1, 2, 3, 4]);
    }

    #[test]
    fn ordered_pairs_are_uniform() {
        // 6 ordered pairs, 10 000 draws: chi-square with 5 degrees of
        // freedom; 20.5 is the 0.999 quantile.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = std::collections::HashMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            *counts
                .entry(sample_ordered_list(&['a', 'b', 'c'], 2, &mut rng))
                .or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 20.5, "chi-square {chi2}");
    }
}
