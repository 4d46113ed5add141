//! Deferred-acceptance heuristics for markets with couples.
//!
//! Both algorithms share one proposal engine. Applicants (singles, and
//! couples as units) propose down their ROLs; programs hold the best
//! applicants up to quota and evict the rest. An evicted couple member
//! pulls its partner out too, and the couple resumes at its next pair.
//!
//! Evictions of couples free slots that earlier-rejected applicants may now
//! want, so a quiescent state need not be stable. At every quiescent point
//! the engine looks for blocking pairs; each blocking applicant withdraws
//! and re-proposes from its best blocking option. Quiescent states are
//! recorded, and revisiting one means the process cycles.
//!
//! * KPR queues every single and couple at once.
//! * RP99 runs plain DA on the singles, then admits couples one at a time,
//!   restabilizing after each admission.

use std::collections::{HashSet, VecDeque};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BlockingPair, CoupleId, DoctorId, Instance, Matching, ProgramRef, Role};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaStatus {
    Matched,
    FailedCycle,
    FailedTimeout,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DaOutcome {
    pub status: DaStatus,
    /// Present iff `status == Matched`; always stable.
    pub matching: Option<Matching>,
    /// Proposal events.
    pub iterations: u64,
    /// Quiescent points reached.
    pub rounds: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DaError {
    #[error("instance must be preprocessed")]
    NotPreprocessed,
    #[error("couple order must list every couple exactly once")]
    BadOrder,
    #[error("deferred acceptance produced an unstable matching: {0}")]
    Unstable(String),
}

/// Order in which RP99 admits couples.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum CoupleOrder {
    #[default]
    Instance,
    Shuffled(u64),
    Explicit(Vec<CoupleId>),
}

impl CoupleOrder {
    pub fn resolve(&self, inst: &Instance) -> Result<Vec<CoupleId>, DaError> {
        let mut ids: Vec<CoupleId> = inst.couple_ids().collect();
        match self {
            CoupleOrder::Instance => Ok(ids),
            CoupleOrder::Shuffled(seed) => {
                ids.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
                Ok(ids)
            }
            CoupleOrder::Explicit(order) => {
                let mut sorted = order.clone();
                sorted.sort_unstable();
                if sorted != ids {
                    return Err(DaError::BadOrder);
                }
                Ok(order.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DaCaps {
    /// Proposal-event budget; `None` means `10 · |D| · longest ROL`.
    pub max_proposals: Option<u64>,
    pub max_time: Option<Duration>,
}

impl DaCaps {
    pub fn default_proposals(inst: &Instance) -> u64 {
        let longest = inst
            .singles()
            .iter()
            .map(|s| s.rol.len())
            .chain(inst.couples().iter().map(|c| c.rol.len()))
            .max()
            .unwrap_or(1);
        10 * inst.num_doctors() as u64 * longest as u64
    }
}

pub fn run_kpr(inst: &Instance, caps: &DaCaps) -> Result<DaOutcome, DaError> {
    let mut e = Engine::new(inst, caps)?;
    for d in inst.doctors() {
        match inst.role(d) {
            Role::Single(i) => e.enqueue(Applicant::Single(i)),
            Role::Couple { couple, second: false } => {
                e.couple_active[couple.index()] = true;
                e.enqueue(Applicant::Couple(couple.index()));
            }
            Role::Couple { .. } => {}
        }
    }
    let halt = e.settle();
    e.finish(halt)
}

pub fn run_rp99(inst: &Instance, order: &CoupleOrder, caps: &DaCaps) -> Result<DaOutcome, DaError> {
    let order = order.resolve(inst)?;
    let mut e = Engine::new(inst, caps)?;
    for i in 0..inst.singles().len() {
        e.enqueue(Applicant::Single(i));
    }
    let mut halt = e.settle();
    for c in order {
        if halt.is_err() {
            break;
        }
        e.couple_active[c.index()] = true;
        e.admitted += 1;
        e.enqueue(Applicant::Couple(c.index()));
        halt = e.settle();
    }
    e.finish(halt)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Applicant {
    Single(usize),
    Couple(usize),
}

enum Halt {
    Cycle,
    Timeout,
}

struct Engine<'a> {
    inst: &'a Instance,
    mu: Matching,
    holders: Vec<Vec<DoctorId>>,
    single_next: Vec<usize>,
    couple_next: Vec<usize>,
    single_holding: Vec<bool>,
    couple_holding: Vec<bool>,
    couple_active: Vec<bool>,
    admitted: u32,
    queue: VecDeque<Applicant>,
    proposals: u64,
    rounds: u64,
    cap: u64,
    deadline: Option<Instant>,
    seen: HashSet<Vec<u32>>,
}

impl<'a> Engine<'a> {
    fn new(inst: &'a Instance, caps: &DaCaps) -> Result<Engine<'a>, DaError> {
        if !inst.is_preprocessed() {
            return Err(DaError::NotPreprocessed);
        }
        let ns = inst.singles().len();
        let nc = inst.couples().len();
        Ok(Engine {
            inst,
            mu: Matching::unmatched(inst.num_doctors()),
            holders: vec![Vec::new(); inst.num_programs()],
            single_next: vec![0; ns],
            couple_next: vec![0; nc],
            single_holding: vec![false; ns],
            couple_holding: vec![false; nc],
            couple_active: vec![false; nc],
            admitted: 0,
            queue: VecDeque::new(),
            proposals: 0,
            rounds: 0,
            cap: caps
                .max_proposals
                .unwrap_or_else(|| DaCaps::default_proposals(inst)),
            deadline: caps.max_time.and_then(|t| Instant::now().checked_add(t)),
            seen: HashSet::new(),
        })
    }

    fn finish(self, halt: Result<(), Halt>) -> Result<DaOutcome, DaError> {
        let (status, matching) = match halt {
            Ok(()) => {
                if !self.inst.is_stable(&self.mu) {
                    return Err(DaError::Unstable(
                        self.mu.display(self.inst).to_string(),
                    ));
                }
                (DaStatus::Matched, Some(self.mu))
            }
            Err(Halt::Cycle) => (DaStatus::FailedCycle, None),
            Err(Halt::Timeout) => (DaStatus::FailedTimeout, None),
        };
        Ok(DaOutcome {
            status,
            matching,
            iterations: self.proposals,
            rounds: self.rounds,
        })
    }

    fn enqueue(&mut self, a: Applicant) {
        self.queue.push_back(a);
    }

    fn tick(&mut self) -> Result<(), Halt> {
        self.proposals += 1;
        if self.proposals > self.cap {
            return Err(Halt::Timeout);
        }
        if self.proposals.is_multiple_of(1024) && self.deadline.is_some_and(|t| Instant::now() >= t) {
            return Err(Halt::Timeout);
        }
        Ok(())
    }

    fn held(&self, p: ProgramRef) -> &[DoctorId] {
        match p {
            ProgramRef::Nil => &[],
            ProgramRef::Program(id) => &self.holders[id.index()],
        }
    }

    /// Proposes down the applicant's ROL from its pointer until accepted.
    /// The ROL terminator always accepts.
    fn propose(&mut self, a: Applicant) -> Result<(), Halt> {
        let inst = self.inst;
        match a {
            Applicant::Single(i) => {
                let s = &inst.singles()[i];
                loop {
                    self.tick()?;
                    let p = s.rol[self.single_next[i]];
                    if inst.will_accept_given(p, &[s.doctor], self.held(p)) {
                        self.single_holding[i] = true;
                        self.take(p, &[s.doctor]);
                        return Ok(());
                    }
                    self.single_next[i] += 1;
                }
            }
            Applicant::Couple(c) => {
                let couple = &inst.couples()[c];
                let (d1, d2) = (couple.first, couple.second);
                loop {
                    self.tick()?;
                    let (p1, p2) = couple.rol[self.couple_next[c]];
                    let ok = if p1 == p2 {
                        inst.will_accept_given(p1, &[d1, d2], self.held(p1))
                    } else {
                        inst.will_accept_given(p1, &[d1], self.held(p1))
                            && inst.will_accept_given(p2, &[d2], self.held(p2))
                    };
                    if ok {
                        self.couple_holding[c] = true;
                        if p1 == p2 {
                            self.take(p1, &[d1, d2]);
                        } else {
                            self.take(p1, &[d1]);
                            self.take(p2, &[d2]);
                        }
                        return Ok(());
                    }
                    self.couple_next[c] += 1;
                }
            }
        }
    }

    fn take(&mut self, p: ProgramRef, ds: &[DoctorId]) {
        for &d in ds {
            self.mu.set(d, p);
        }
        let Some(pid) = p.program() else { return };
        let h = &mut self.holders[pid.index()];
        h.extend_from_slice(ds);
        let keep = self.inst.choice(p, h);
        let evicted: Vec<DoctorId> = h.iter().copied().filter(|d| !keep.contains(d)).collect();
        *h = keep;
        for d in evicted {
            self.evict(d);
        }
    }

    fn evict(&mut self, d: DoctorId) {
        match self.inst.role(d) {
            Role::Single(i) => {
                if self.single_holding[i] {
                    self.withdraw(Applicant::Single(i));
                    self.single_next[i] += 1;
                    self.enqueue(Applicant::Single(i));
                }
            }
            Role::Couple { couple, .. } => {
                let c = couple.index();
                if self.couple_holding[c] {
                    self.withdraw(Applicant::Couple(c));
                    self.couple_next[c] += 1;
                    self.enqueue(Applicant::Couple(c));
                }
            }
        }
    }

    fn withdraw(&mut self, a: Applicant) {
        let members: Vec<DoctorId> = match a {
            Applicant::Single(i) => {
                self.single_holding[i] = false;
                vec![self.inst.singles()[i].doctor]
            }
            Applicant::Couple(c) => {
                self.couple_holding[c] = false;
                self.inst.couples()[c].members().to_vec()
            }
        };
        for d in members {
            if let Some(pid) = self.mu.get(d).program() {
                self.holders[pid.index()].retain(|&h| h != d);
            }
            self.mu.set(d, ProgramRef::Nil);
        }
    }

    /// Runs the queue dry, then repairs blocking pairs until none remain.
    fn settle(&mut self) -> Result<(), Halt> {
        loop {
            while let Some(a) = self.queue.pop_front() {
                self.propose(a)?;
            }
            self.rounds += 1;
            if !self.seen.insert(self.snapshot()) {
                return Err(Halt::Cycle);
            }
            let blocking = self.blocking();
            if blocking.is_empty() {
                return Ok(());
            }
            for (a, k) in blocking {
                self.withdraw(a);
                match a {
                    Applicant::Single(i) => self.single_next[i] = k,
                    Applicant::Couple(c) => self.couple_next[c] = k,
                }
                self.enqueue(a);
            }
        }
    }

    /// When the queue is empty every active applicant holds the entry its
    /// pointer names, so pointers plus the admission count fix the state.
    fn snapshot(&self) -> Vec<u32> {
        let mut s = Vec::with_capacity(self.single_next.len() + self.couple_next.len() + 1);
        s.push(self.admitted);
        s.extend(self.single_next.iter().map(|&x| x as u32));
        s.extend(self.couple_next.iter().map(|&x| x as u32));
        s
    }

    /// Best blocking option per active applicant, as a ROL index.
    fn blocking(&self) -> Vec<(Applicant, usize)> {
        let inst = self.inst;
        let mut out: Vec<(Applicant, usize)> = Vec::new();
        for bp in inst.find_blocking_pairs(&self.mu) {
            let entry = match bp {
                BlockingPair::Single { doctor, program } => {
                    let Role::Single(i) = inst.role(doctor) else { continue };
                    (Applicant::Single(i), inst.single_rank(i, program.into()))
                }
                BlockingPair::CouplePrograms { couple, programs } => {
                    if !self.couple_active[couple.index()] {
                        continue;
                    }
                    (Applicant::Couple(couple.index()), inst.couple_rank(couple, programs))
                }
                BlockingPair::CoupleSameProgram { couple, program } => {
                    if !self.couple_active[couple.index()] {
                        continue;
                    }
                    let p = ProgramRef::from(program);
                    (Applicant::Couple(couple.index()), inst.couple_rank(couple, (p, p)))
                }
            };
            match out.iter_mut().find(|(a, _)| *a == entry.0) {
                Some(slot) => slot.1 = slot.1.min(entry.1),
                None => out.push(entry),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::format::{parse_matching, parse_text};

    #[test]
    fn five_doctor_both_find_the_table_matching() {
        let inst = fixtures::five_doctor_truthful();
        let want = fixtures::five_doctor_truthful_matching(&inst);
        let kpr = run_kpr(&inst, &DaCaps::default()).unwrap();
        assert_eq!(kpr.status, DaStatus::Matched);
        assert_eq!(kpr.matching.as_ref(), Some(&want));
        let rp = run_rp99(&inst, &CoupleOrder::Instance, &DaCaps::default()).unwrap();
        assert_eq!(rp.matching.as_ref(), Some(&want));
    }

    #[test]
    fn singles_only_is_gale_shapley() {
        // r1 displaces r0 at x and r0 falls back to y.
        let inst = parse_text(
            "smpc v1
program x 1
program y 1
single r0 : x y
single r1 : x y
progrol x : r1 r0
progrol y : r0 r1
",
        )
        .unwrap();
        let want = parse_matching(&inst, "r0=y r1=x").unwrap();
        for out in [
            run_kpr(&inst, &DaCaps::default()).unwrap(),
            run_rp99(&inst, &CoupleOrder::Instance, &DaCaps::default()).unwrap(),
        ] {
            assert_eq!(out.matching.as_ref(), Some(&want));
        }
    }

    #[test]
    fn couple_eviction_frees_the_partner_slot() {
        // The couple first holds (x,y); s bumps r1 from x, so r2 must leave
        // y and the couple falls to its next pair (z,y).
        let inst = parse_text(
            "smpc v1
program x 1
program y 1
program z 1
couple r1 r2 : x,y ; z,y
single s : x
progrol x : s r1
progrol y : r2
progrol z : r1
",
        )
        .unwrap();
        let want = parse_matching(&inst, "r1=z r2=y s=x").unwrap();
        let out = run_kpr(&inst, &DaCaps::default()).unwrap();
        assert_eq!(out.matching.as_ref(), Some(&want));
        let out = run_rp99(&inst, &CoupleOrder::Instance, &DaCaps::default()).unwrap();
        assert_eq!(out.matching.as_ref(), Some(&want));
    }

    #[test]
    fn vacated_slot_is_reclaimed() {
        // t is rejected by x while r1 holds it; once the couple is evicted
        // via y, x has room again and t must come back.
        let inst = parse_text(
            "smpc v1
program x 1
program y 1
couple r1 r2 : x,y
single t : x
single u : y
progrol x : r1 t
progrol y : u r2
",
        )
        .unwrap();
        for out in [
            run_kpr(&inst, &DaCaps::default()).unwrap(),
            run_rp99(&inst, &CoupleOrder::Instance, &DaCaps::default()).unwrap(),
        ] {
            let mu = out.matching.unwrap();
            assert!(inst.is_stable(&mu));
            assert_eq!(mu, parse_matching(&inst, "r1=@nil r2=@nil t=x u=y").unwrap());
        }
    }

    #[test]
    fn no_stable_matching_means_failure() {
        // A market without any stable matching: no DA run may report one.
        let inst = parse_text(
            "smpc v1
program x 1
program y 1
couple c1 c2 : x,y
single s : y x
progrol x : s c1
progrol y : c2 s
",
        )
        .unwrap();
        let all_unstable = crate::oracle::brute_force_stable_set(&inst).unwrap().is_empty();
        assert!(all_unstable);
        let kpr = run_kpr(&inst, &DaCaps::default()).unwrap();
        assert_ne!(kpr.status, DaStatus::Matched);
        let rp = run_rp99(&inst, &CoupleOrder::Instance, &DaCaps::default()).unwrap();
        assert_ne!(rp.status, DaStatus::Matched);
    }

    #[test]
    fn tiny_cap_times_out() {
        let inst = fixtures::five_doctor_truthful();
        let caps = DaCaps {
            max_proposals: Some(2),
            max_time: None,
        };
        let out = run_kpr(&inst, &caps).unwrap();
        assert_eq!(out.status, DaStatus::FailedTimeout);
        assert!(out.matching.is_none());
    }

    #[test]
    fn order_validation() {
        let inst = fixtures::five_doctor_truthful();
        let bad = CoupleOrder::Explicit(vec![CoupleId(0)]);
        assert_eq!(run_rp99(&inst, &bad, &DaCaps::default()), Err(DaError::BadOrder));
        let rev = CoupleOrder::Explicit(vec![CoupleId(1), CoupleId(0)]);
        assert_eq!(rev.resolve(&inst).unwrap(), vec![CoupleId(1), CoupleId(0)]);
        let a = CoupleOrder::Shuffled(7).resolve(&inst).unwrap();
        assert_eq!(a, CoupleOrder::Shuffled(7).resolve(&inst).unwrap());
    }

    #[test]
    fn rejects_unpreprocessed() {
        let inst = parse_text(
            "smpc v1
program x 1
single a : x
progrol x :
",
        )
        .unwrap();
        assert_eq!(run_kpr(&inst, &DaCaps::default()), Err(DaError::NotPreprocessed));
    }
}
