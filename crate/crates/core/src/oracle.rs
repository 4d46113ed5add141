//! Exhaustive ground truth for small markets, independent of the encoding
//! and the solver.
//!
//! Singles range over their ROL entries and couples over their joint ROL
//! entries, so every candidate is individually rational on the doctor side;
//! quotas prune partial assignments. Survivors go through
//! [`Instance::is_stable`] and are classified by comparing rank vectors
//! directly.

use thiserror::Error;

use crate::algos::{EnumStatus, StableSet};
use crate::model::{Instance, Matching, ProgramRef};

/// Largest search space the oracle will walk.
pub const MAX_SPACE: u128 = 10_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("search space {0} exceeds the limit of {MAX_SPACE}")]
    TooLarge(u128),
}

pub fn search_space(inst: &Instance) -> u128 {
    inst.singles()
        .iter()
        .map(|s| s.rol.len() as u128)
        .chain(inst.couples().iter().map(|c| c.rol.len() as u128))
        .fold(1u128, |acc, k| acc.saturating_mul(k))
}

/// Every stable matching of `inst`.
pub fn brute_force_stable_set(inst: &Instance) -> Result<StableSet, OracleError> {
    let space = search_space(inst);
    if space > MAX_SPACE {
        return Err(OracleError::TooLarge(space));
    }
    let mut walk = Walk {
        inst,
        mu: Matching::unmatched(inst.num_doctors()),
        load: vec![0; inst.num_programs()],
        found: Vec::new(),
    };
    walk.singles(0);
    let found = walk.found;

    let ranks: Vec<(Vec<usize>, Vec<usize>)> = found
        .iter()
        .map(|m| (inst.single_ranks(m), inst.couple_ranks(m)))
        .collect();
    let members = (0..found.len())
        .map(|i| {
            let dominated = (0..found.len()).any(|j| j != i && better(&ranks[j], &ranks[i]));
            (found[i].clone(), !dominated)
        })
        .collect();
    Ok(StableSet::with_flags(members, EnumStatus::Complete))
}

/// `a` is at least as good for every participant and strictly better for
/// one. Ranks are positions on each participant's ROL, so equal rank means
/// equal outcome.
fn better(a: &(Vec<usize>, Vec<usize>), b: &(Vec<usize>, Vec<usize>)) -> bool {
    let pairs = a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1));
    let mut strict = false;
    for (x, y) in pairs {
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

struct Walk<'a> {
    inst: &'a Instance,
    mu: Matching,
    load: Vec<u32>,
    found: Vec<Matching>,
}

impl Walk<'_> {
    fn fits(&self, p: ProgramRef, extra: u32) -> bool {
        match p.program() {
            None => true,
            Some(id) => self.load[id.index()] + extra <= self.inst.quota(id),
        }
    }

    fn bump(&mut self, p: ProgramRef, delta: i32) {
        if let Some(id) = p.program() {
            let l = &mut self.load[id.index()];
            *l = (*l as i32 + delta) as u32;
        }
    }

    fn singles(&mut self, i: usize) {
        let inst = self.inst;
        if i == inst.singles().len() {
            return self.couples(0);
        }
        let s = &inst.singles()[i];
        for &p in &s.rol {
            if !self.fits(p, 1) {
                continue;
            }
            self.bump(p, 1);
            self.mu.set(s.doctor, p);
            self.singles(i + 1);
            self.bump(p, -1);
        }
        self.mu.set(s.doctor, ProgramRef::Nil);
    }

    fn couples(&mut self, i: usize) {
        let inst = self.inst;
        if i == inst.couples().len() {
            if inst.is_stable(&self.mu) {
                self.found.push(self.mu.clone());
            }
            return;
        }
        let c = &inst.couples()[i];
        for &(p1, p2) in &c.rol {
            let ok = if p1 == p2 {
                self.fits(p1, 2)
            } else {
                self.fits(p1, 1) && self.fits(p2, 1)
            };
            if !ok {
                continue;
            }
            self.bump(p1, 1);
            self.bump(p2, 1);
            self.mu.set(c.first, p1);
            self.mu.set(c.second, p2);
            self.couples(i + 1);
            self.bump(p1, -1);
            self.bump(p2, -1);
        }
        self.mu.set(c.first, ProgramRef::Nil);
        self.mu.set(c.second, ProgramRef::Nil);
    }
}
