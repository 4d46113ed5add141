//! Market participants, matchings, and the reference stability checker.
//!
//! Every other module (the SAT path, the deferred-acceptance heuristics and
//! the brute-force oracle) is validated against the predicates defined here.
//!
//! Ranked order lists (ROLs) of singles and couples carry their `Nil`
//! terminator explicitly as the last entry. Program ROLs store only the
//! ranked doctors; the implicit `Nil` terminator sits at index `rol.len()`.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DoctorId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProgramId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoupleId(pub u32);

impl DoctorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ProgramId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl CoupleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A match target for a doctor: a real program or `Nil` (unmatched).
///
/// `Nil` accepts everyone and has unbounded capacity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProgramRef {
    Nil,
    Program(ProgramId),
}

impl ProgramRef {
    pub fn program(self) -> Option<ProgramId> {
        match self {
            ProgramRef::Nil => None,
            ProgramRef::Program(p) => Some(p),
        }
    }

    pub fn is_nil(self) -> bool {
        matches!(self, ProgramRef::Nil)
    }
}

impl From<ProgramId> for ProgramRef {
    fn from(p: ProgramId) -> Self {
        ProgramRef::Program(p)
    }
}

pub type ProgramPair = (ProgramRef, ProgramRef);

pub const NIL_PAIR: ProgramPair = (ProgramRef::Nil, ProgramRef::Nil);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub name: String,
    pub quota: u32,
    /// Ranked doctors, most preferred first. `Nil` is implicit at the end.
    pub rol: Vec<DoctorId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Single {
    pub doctor: DoctorId,
    /// Ranked programs ending with `ProgramRef::Nil`.
    pub rol: Vec<ProgramRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Couple {
    pub first: DoctorId,
    pub second: DoctorId,
    /// Ranked program pairs ending with `(Nil, Nil)`.
    pub rol: Vec<ProgramPair>,
}

impl Couple {
    pub fn members(&self) -> [DoctorId; 2] {
        [self.first, self.second]
    }
}

/// What kind of participant a doctor is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Index into [`Instance::singles`].
    Single(usize),
    Couple { couple: CoupleId, second: bool },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("doctor {0} is neither a single nor a couple member")]
    UnassignedDoctor(String),
    #[error("doctor {0} appears in more than one participant")]
    DuplicateParticipant(String),
    #[error("program {0} has quota 0")]
    ZeroQuota(String),
    #[error("ROL of {owner} lists {entry} more than once")]
    DuplicateRolEntry { owner: String, entry: String },
    #[error("ROL of {0} is not terminated by nil")]
    MissingTerminator(String),
    #[error("ROL of {0} has nil before its end")]
    EarlyTerminator(String),
    #[error("{owner} references unknown {kind} #{index}")]
    UnknownReference {
        owner: String,
        kind: &'static str,
        index: usize,
    },
    #[error("couple members of {0} must be distinct")]
    DegenerateCouple(String),
}

/// Per-participant rank lookups. Absent entries rank at `|ROL|`.
#[derive(Clone, Debug, Default)]
struct RankIndex {
    single: Vec<HashMap<ProgramRef, usize>>,
    couple: Vec<HashMap<ProgramPair, usize>>,
    program: Vec<HashMap<DoctorId, usize>>,
}

/// A stable-matching-with-couples market. Immutable once built.
#[derive(Clone, Debug)]
pub struct Instance {
    doctor_names: Vec<String>,
    programs: Vec<Program>,
    singles: Vec<Single>,
    couples: Vec<Couple>,
    roles: Vec<Role>,
    ranked: Vec<Vec<ProgramRef>>,
    ranks: RankIndex,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.doctor_names == other.doctor_names
            && self.programs == other.programs
            && self.singles == other.singles
            && self.couples == other.couples
    }
}

impl Eq for Instance {}

impl Instance {
    /// Validates and indexes a market. ROLs of singles and couples must
    /// already end with their terminator.
    pub fn new(
        doctor_names: Vec<String>,
        programs: Vec<Program>,
        singles: Vec<Single>,
        couples: Vec<Couple>,
    ) -> Result<Instance, ModelError> {
        let nd = doctor_names.len();
        let np = programs.len();
        let dname = |d: DoctorId| {
            doctor_names
                .get(d.index())
                .cloned()
                .unwrap_or_else(|| format!("#{}", d.0))
        };
        let check_doctor = |owner: &str, d: DoctorId| {
            if d.index() >= nd {
                Err(ModelError::UnknownReference {
                    owner: owner.to_string(),
                    kind: "doctor",
                    index: d.index(),
                })
            } else {
                Ok(())
            }
        };
        let check_program = |owner: &str, p: ProgramRef| match p {
            ProgramRef::Program(id) if id.index() >= np => Err(ModelError::UnknownReference {
                owner: owner.to_string(),
                kind: "program",
                index: id.index(),
            }),
            _ => Ok(()),
        };

        let mut roles: Vec<Option<Role>> = vec![None; nd];
        let mut claim = |d: DoctorId, role: Role| -> Result<(), ModelError> {
            let slot = &mut roles[d.index()];
            if slot.is_some() {
                return Err(ModelError::DuplicateParticipant(dname(d)));
            }
            *slot = Some(role);
            Ok(())
        };

        for (i, s) in singles.iter().enumerate() {
            check_doctor("single", s.doctor)?;
            let owner = dname(s.doctor);
            claim(s.doctor, Role::Single(i))?;
            match s.rol.last() {
                Some(ProgramRef::Nil) => {}
                _ => return Err(ModelError::MissingTerminator(owner)),
            }
            let body = &s.rol[..s.rol.len() - 1];
            let mut seen = HashSet::new();
            for &p in body {
                check_program(&owner, p)?;
                if p.is_nil() {
                    return Err(ModelError::EarlyTerminator(owner));
                }
                if !seen.insert(p) {
                    return Err(ModelError::DuplicateRolEntry {
                        owner,
                        entry: format!("{p:?}"),
                    });
                }
            }
        }
        for (i, c) in couples.iter().enumerate() {
            check_doctor("couple", c.first)?;
            check_doctor("couple", c.second)?;
            let owner = format!("({},{})", dname(c.first), dname(c.second));
            if c.first == c.second {
                return Err(ModelError::DegenerateCouple(owner));
            }
            let id = CoupleId(i as u32);
            claim(c.first, Role::Couple { couple: id, second: false })?;
            claim(c.second, Role::Couple { couple: id, second: true })?;
            match c.rol.last() {
                Some(&pair) if pair == NIL_PAIR => {}
                _ => return Err(ModelError::MissingTerminator(owner)),
            }
            let body = &c.rol[..c.rol.len() - 1];
            let mut seen = HashSet::new();
            for &(a, b) in body {
                check_program(&owner, a)?;
                check_program(&owner, b)?;
                if (a, b) == NIL_PAIR {
                    return Err(ModelError::EarlyTerminator(owner));
                }
                if !seen.insert((a, b)) {
                    return Err(ModelError::DuplicateRolEntry {
                        owner,
                        entry: format!("({a:?},{b:?})"),
                    });
                }
            }
        }
        for p in &programs {
            if p.quota == 0 {
                return Err(ModelError::ZeroQuota(p.name.clone()));
            }
            let mut seen = HashSet::new();
            for &d in &p.rol {
                check_doctor(&p.name, d)?;
                if !seen.insert(d) {
                    return Err(ModelError::DuplicateRolEntry {
                        owner: p.name.clone(),
                        entry: dname(d),
                    });
                }
            }
        }
        let roles = roles
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| ModelError::UnassignedDoctor(doctor_names[i].clone())))
            .collect::<Result<Vec<_>, _>>()?;

        let mut ranked = vec![Vec::new(); nd];
        for s in &singles {
            ranked[s.doctor.index()] = s.rol.clone();
        }
        for c in &couples {
            let mut first = Vec::new();
            let mut second = Vec::new();
            for &(a, b) in &c.rol[..c.rol.len() - 1] {
                if !a.is_nil() && !first.contains(&a) {
                    first.push(a);
                }
                if !b.is_nil() && !second.contains(&b) {
                    second.push(b);
                }
            }
            first.push(ProgramRef::Nil);
            second.push(ProgramRef::Nil);
            ranked[c.first.index()] = first;
            ranked[c.second.index()] = second;
        }

        let ranks = RankIndex {
            single: singles
                .iter()
                .map(|s| s.rol.iter().enumerate().map(|(i, &p)| (p, i)).collect())
                .collect(),
            couple: couples
                .iter()
                .map(|c| c.rol.iter().enumerate().map(|(i, &p)| (p, i)).collect())
                .collect(),
            program: programs
                .iter()
                .map(|p| p.rol.iter().enumerate().map(|(i, &d)| (d, i)).collect())
                .collect(),
        };

        Ok(Instance {
            doctor_names,
            programs,
            singles,
            couples,
            roles,
            ranked,
            ranks,
        })
    }

    pub fn empty() -> Instance {
        Instance::new(Vec::new(), Vec::new(), Vec::new(), Vec::new()).expect("empty market is valid")
    }

    pub fn num_doctors(&self) -> usize {
        self.doctor_names.len()
    }

    pub fn num_programs(&self) -> usize {
        self.programs.len()
    }

    pub fn doctors(&self) -> impl Iterator<Item = DoctorId> + '_ {
        (0..self.doctor_names.len() as u32).map(DoctorId)
    }

    pub fn program_ids(&self) -> impl Iterator<Item = ProgramId> + '_ {
        (0..self.programs.len() as u32).map(ProgramId)
    }

    pub fn couple_ids(&self) -> impl Iterator<Item = CoupleId> + '_ {
        (0..self.couples.len() as u32).map(CoupleId)
    }

    pub fn doctor_names(&self) -> &[String] {
        &self.doctor_names
    }

    pub fn doctor_name(&self, d: DoctorId) -> &str {
        &self.doctor_names[d.index()]
    }

    pub fn programs(&self) -> &[Program] {
        &self.programs
    }

    pub fn program(&self, p: ProgramId) -> &Program {
        &self.programs[p.index()]
    }

    pub fn program_name(&self, p: ProgramRef) -> &str {
        match p {
            ProgramRef::Nil => crate::format::NIL_TOKEN,
            ProgramRef::Program(id) => &self.programs[id.index()].name,
        }
    }

    pub fn quota(&self, p: ProgramId) -> u32 {
        self.programs[p.index()].quota
    }

    pub fn singles(&self) -> &[Single] {
        &self.singles
    }

    pub fn couples(&self) -> &[Couple] {
        &self.couples
    }

    pub fn couple(&self, c: CoupleId) -> &Couple {
        &self.couples[c.index()]
    }

    pub fn role(&self, d: DoctorId) -> Role {
        self.roles[d.index()]
    }

    pub fn find_doctor(&self, name: &str) -> Option<DoctorId> {
        self.doctor_names
            .iter()
            .position(|n| n == name)
            .map(|i| DoctorId(i as u32))
    }

    pub fn find_program(&self, name: &str) -> Option<ProgramId> {
        self.programs
            .iter()
            .position(|p| p.name == name)
            .map(|i| ProgramId(i as u32))
    }

    /// Options doctor `d` could be matched with; always ends with `Nil`.
    /// For couple members this is the set of programs their side of the
    /// joint ROL mentions, in order of first appearance.
    pub fn ranked(&self, d: DoctorId) -> &[ProgramRef] {
        &self.ranked[d.index()]
    }

    /// Zero-based rank of `p` on the single's ROL, `|ROL|` if absent.
    pub fn single_rank(&self, single: usize, p: ProgramRef) -> usize {
        let s = &self.singles[single];
        self.ranks.single[single]
            .get(&p)
            .copied()
            .unwrap_or(s.rol.len())
    }

    /// Zero-based rank of `pair` on the couple's joint ROL, `|ROL|` if absent.
    pub fn couple_rank(&self, c: CoupleId, pair: ProgramPair) -> usize {
        self.ranks.couple[c.index()]
            .get(&pair)
            .copied()
            .unwrap_or(self.couples[c.index()].rol.len())
    }

    /// Position of `d` on `p`'s ROL, or `None` when `p` finds `d` unacceptable.
    pub fn program_rank(&self, p: ProgramId, d: DoctorId) -> Option<usize> {
        self.ranks.program[p.index()].get(&d).copied()
    }

    pub fn acceptable_to(&self, p: ProgramId, d: DoctorId) -> bool {
        self.ranks.program[p.index()].contains_key(&d)
    }

    /// The subset of `applicants` that `p` would keep: acceptable doctors,
    /// best first, truncated to the quota. `Nil` keeps everyone.
    pub fn choice(&self, p: ProgramRef, applicants: &[DoctorId]) -> Vec<DoctorId> {
        let mut pool: Vec<DoctorId> = applicants.to_vec();
        pool.sort_unstable();
        pool.dedup();
        let Some(pid) = p.program() else {
            return pool;
        };
        let mut ranked: Vec<(usize, DoctorId)> = pool
            .into_iter()
            .filter_map(|d| self.program_rank(pid, d).map(|r| (r, d)))
            .collect();
        ranked.sort_unstable();
        ranked.truncate(self.quota(pid) as usize);
        ranked.into_iter().map(|(_, d)| d).collect()
    }

    /// Whether `p` would take all of `applicants` given it currently holds
    /// `holders`.
    pub fn will_accept_given(
        &self,
        p: ProgramRef,
        applicants: &[DoctorId],
        holders: &[DoctorId],
    ) -> bool {
        let Some(pid) = p.program() else {
            return true;
        };
        let quota = self.quota(pid) as usize;
        // Each applicant must be acceptable and must have fewer than `quota`
        // members of holders ∪ applicants strictly ahead of it.
        applicants.iter().all(|&d| {
            let Some(rd) = self.program_rank(pid, d) else {
                return false;
            };
            let ahead = holders
                .iter()
                .chain(applicants.iter().filter(|&&a| !holders.contains(&a)))
                .filter(|&&h| h != d)
                .filter(|&&h| matches!(self.program_rank(pid, h), Some(rh) if rh < rd))
                .count();
            ahead < quota
        })
    }

    pub fn will_accept(&self, p: ProgramRef, applicants: &[DoctorId], mu: &Matching) -> bool {
        match p {
            ProgramRef::Nil => true,
            ProgramRef::Program(_) => {
                let holders = mu.holders_of(p);
                self.will_accept_given(p, applicants, &holders)
            }
        }
    }

    /// The pair the couple is matched to under `mu`.
    pub fn couple_outcome(&self, c: CoupleId, mu: &Matching) -> ProgramPair {
        let couple = &self.couples[c.index()];
        (mu.get(couple.first), mu.get(couple.second))
    }

    pub fn is_individually_rational(&self, mu: &Matching) -> bool {
        if mu.len() != self.num_doctors() {
            return false;
        }
        for (i, s) in self.singles.iter().enumerate() {
            if self.single_rank(i, mu.get(s.doctor)) >= s.rol.len() {
                return false;
            }
        }
        for c in self.couple_ids() {
            if self.couple_rank(c, self.couple_outcome(c, mu)) >= self.couples[c.index()].rol.len() {
                return false;
            }
        }
        let holders = mu.inverse(self.num_programs());
        for p in self.program_ids() {
            let h = &holders[p.index()];
            if h.len() > self.quota(p) as usize {
                return false;
            }
            if h.iter().any(|&d| !self.acceptable_to(p, d)) {
                return false;
            }
        }
        true
    }

    /// Every blocking pair for `mu`, singles first, then couples in ROL order.
    pub fn find_blocking_pairs(&self, mu: &Matching) -> Vec<BlockingPair> {
        let holders = mu.inverse(self.num_programs());
        let held = |p: ProgramRef| -> &[DoctorId] {
            match p {
                ProgramRef::Nil => &[],
                ProgramRef::Program(id) => &holders[id.index()],
            }
        };
        let mut out = Vec::new();
        for (i, s) in self.singles.iter().enumerate() {
            let current = self.single_rank(i, mu.get(s.doctor));
            for &p in s.rol.iter().take(current) {
                let Some(pid) = p.program() else { continue };
                if self.will_accept_given(p, &[s.doctor], held(p)) {
                    out.push(BlockingPair::Single {
                        doctor: s.doctor,
                        program: pid,
                    });
                }
            }
        }
        for c in self.couple_ids() {
            let couple = &self.couples[c.index()];
            let current = self.couple_rank(c, self.couple_outcome(c, mu));
            for &(p1, p2) in couple.rol.iter().take(current) {
                if p1 != p2 {
                    if self.will_accept_given(p1, &[couple.first], held(p1))
                        && self.will_accept_given(p2, &[couple.second], held(p2))
                    {
                        out.push(BlockingPair::CouplePrograms {
                            couple: c,
                            programs: (p1, p2),
                        });
                    }
                } else if let Some(pid) = p1.program() {
                    if self.will_accept_given(p1, &[couple.first, couple.second], held(p1)) {
                        out.push(BlockingPair::CoupleSameProgram {
                            couple: c,
                            program: pid,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn is_stable(&self, mu: &Matching) -> bool {
        self.is_individually_rational(mu) && self.find_blocking_pairs(mu).is_empty()
    }

    /// `mu1 ≻_R mu2`: every single and couple weakly prefers `mu1`, and the
    /// matchings differ.
    pub fn dominates(&self, mu1: &Matching, mu2: &Matching) -> bool {
        if mu1 == mu2 {
            return false;
        }
        for (i, s) in self.singles.iter().enumerate() {
            let (a, b) = (mu1.get(s.doctor), mu2.get(s.doctor));
            if a != b && !(self.single_rank(i, a) < self.single_rank(i, b)) {
                return false;
            }
        }
        for c in self.couple_ids() {
            let (a, b) = (self.couple_outcome(c, mu1), self.couple_outcome(c, mu2));
            if a != b && !(self.couple_rank(c, a) < self.couple_rank(c, b)) {
                return false;
            }
        }
        true
    }

    /// Drops ROL entries of doctors that the named program does not rank.
    pub fn preprocess(&self) -> Instance {
        let singles = self
            .singles
            .iter()
            .map(|s| Single {
                doctor: s.doctor,
                rol: s
                    .rol
                    .iter()
                    .copied()
                    .filter(|&p| self.ref_accepts(p, s.doctor))
                    .collect(),
            })
            .collect();
        let couples = self
            .couples
            .iter()
            .map(|c| Couple {
                first: c.first,
                second: c.second,
                rol: c
                    .rol
                    .iter()
                    .copied()
                    .filter(|&(a, b)| self.ref_accepts(a, c.first) && self.ref_accepts(b, c.second))
                    .collect(),
            })
            .collect();
        Instance::new(
            self.doctor_names.clone(),
            self.programs.clone(),
            singles,
            couples,
        )
        .expect("filtering a valid instance keeps it valid")
    }

    /// True when every doctor-side ROL entry is acceptable to its program.
    pub fn is_preprocessed(&self) -> bool {
        self.singles
            .iter()
            .all(|s| s.rol.iter().all(|&p| self.ref_accepts(p, s.doctor)))
            && self.couples.iter().all(|c| {
                c.rol
                    .iter()
                    .all(|&(a, b)| self.ref_accepts(a, c.first) && self.ref_accepts(b, c.second))
            })
    }

    fn ref_accepts(&self, p: ProgramRef, d: DoctorId) -> bool {
        match p {
            ProgramRef::Nil => true,
            ProgramRef::Program(id) => self.acceptable_to(id, d),
        }
    }

    /// Rank of each single's outcome on its own ROL, in `singles()` order.
    pub fn single_ranks(&self, mu: &Matching) -> Vec<usize> {
        self.singles
            .iter()
            .enumerate()
            .map(|(i, s)| self.single_rank(i, mu.get(s.doctor)))
            .collect()
    }

    /// Rank of each couple's joint outcome on its ROL, in couple order.
    pub fn couple_ranks(&self, mu: &Matching) -> Vec<usize> {
        self.couple_ids()
            .map(|c| self.couple_rank(c, self.couple_outcome(c, mu)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockingPair {
    Single {
        doctor: DoctorId,
        program: ProgramId,
    },
    /// Couple blocking with two different targets (either may be `Nil`).
    CouplePrograms {
        couple: CoupleId,
        programs: ProgramPair,
    },
    /// Couple blocking with both members in the same real program.
    CoupleSameProgram {
        couple: CoupleId,
        program: ProgramId,
    },
}

/// Total map from doctors to programs or `Nil`. Ordering is the canonical
/// lexicographic order of the assignment vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Matching {
    assignment: Vec<ProgramRef>,
}

impl Matching {
    pub fn new(assignment: Vec<ProgramRef>) -> Matching {
        Matching { assignment }
    }

    pub fn unmatched(num_doctors: usize) -> Matching {
        Matching {
            assignment: vec![ProgramRef::Nil; num_doctors],
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn get(&self, d: DoctorId) -> ProgramRef {
        self.assignment[d.index()]
    }

    pub fn set(&mut self, d: DoctorId, p: ProgramRef) {
        self.assignment[d.index()] = p;
    }

    pub fn assignment(&self) -> &[ProgramRef] {
        &self.assignment
    }

    pub fn iter(&self) -> impl Iterator<Item = (DoctorId, ProgramRef)> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .map(|(i, &p)| (DoctorId(i as u32), p))
    }

    /// Doctors matched to `p`, in doctor order. Empty for `Nil`.
    pub fn holders_of(&self, p: ProgramRef) -> Vec<DoctorId> {
        if p.is_nil() {
            return Vec::new();
        }
        self.iter().filter(|&(_, q)| q == p).map(|(d, _)| d).collect()
    }

    /// `µ⁻¹` for every real program.
    pub fn inverse(&self, num_programs: usize) -> Vec<Vec<DoctorId>> {
        let mut out = vec![Vec::new(); num_programs];
        for (d, p) in self.iter() {
            if let ProgramRef::Program(id) = p {
                out[id.index()].push(d);
            }
        }
        out
    }

    pub fn display<'a>(&'a self, inst: &'a Instance) -> MatchingDisplay<'a> {
        MatchingDisplay { mu: self, inst }
    }
}

pub struct MatchingDisplay<'a> {
    mu: &'a Matching,
    inst: &'a Instance,
}

impl fmt::Display for MatchingDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (d, p)) in self.mu.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}={}", self.inst.doctor_name(d), self.inst.program_name(p))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn names(inst: &Instance, ds: &[DoctorId]) -> Vec<String> {
        ds.iter().map(|&d| inst.doctor_name(d).to_string()).collect()
    }

    fn pref(inst: &Instance, name: &str) -> ProgramRef {
        ProgramRef::Program(inst.find_program(name).unwrap())
    }

    fn doc(inst: &Instance, name: &str) -> DoctorId {
        inst.find_doctor(name).unwrap()
    }

    /// One single `d` and one program `p` that rank each other.
    fn mutual_pair() -> Instance {
        Instance::new(
            vec!["d".into()],
            vec![Program {
                name: "p".into(),
                quota: 1,
                rol: vec![DoctorId(0)],
            }],
            vec![Single {
                doctor: DoctorId(0),
                rol: vec![ProgramRef::Program(ProgramId(0)), ProgramRef::Nil],
            }],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn choice_keeps_top_of_quota() {
        let inst = fixtures::five_doctor_truthful();
        let a = pref(&inst, "a");
        let got = inst.choice(a, &[doc(&inst, "r0"), doc(&inst, "r1"), doc(&inst, "r3")]);
        assert_eq!(names(&inst, &got), vec!["r3"]);
        assert!(inst.choice(a, &[]).is_empty());
        let both = [doc(&inst, "r1"), doc(&inst, "r2")];
        assert_eq!(inst.choice(ProgramRef::Nil, &both), both.to_vec());
    }

    #[test]
    fn choice_drops_unacceptable() {
        let inst = fixtures::five_doctor_truthful();
        // b ranks only r1 and r0
        let got = inst.choice(pref(&inst, "b"), &[doc(&inst, "r4"), doc(&inst, "r0")]);
        assert_eq!(names(&inst, &got), vec!["r0"]);
    }

    #[test]
    fn will_accept_cases() {
        let inst = fixtures::five_doctor_truthful();
        let mu = fixtures::five_doctor_truthful_matching(&inst);
        let a = pref(&inst, "a");
        assert!(!inst.will_accept(a, &[doc(&inst, "r0")], &mu));
        assert!(inst.will_accept(a, &mu.holders_of(a), &mu));
        assert!(inst.will_accept(ProgramRef::Nil, &[doc(&inst, "r0")], &mu));
        // d holds r4; r0 and r2 are both ahead of r4
        let d = pref(&inst, "d");
        assert!(inst.will_accept(d, &[doc(&inst, "r2")], &mu));
    }

    #[test]
    fn will_accept_pair_needs_two_slots() {
        let inst = Instance::new(
            vec!["x".into(), "y".into(), "z".into()],
            vec![Program {
                name: "p".into(),
                quota: 2,
                rol: vec![DoctorId(2), DoctorId(0), DoctorId(1)],
            }],
            vec![Single {
                doctor: DoctorId(2),
                rol: vec![ProgramRef::Program(ProgramId(0)), ProgramRef::Nil],
            }],
            vec![Couple {
                first: DoctorId(0),
                second: DoctorId(1),
                rol: vec![
                    (ProgramRef::Program(ProgramId(0)), ProgramRef::Program(ProgramId(0))),
                    NIL_PAIR,
                ],
            }],
        )
        .unwrap();
        let p = ProgramRef::Program(ProgramId(0));
        let mut mu = Matching::unmatched(3);
        assert!(inst.will_accept(p, &[DoctorId(0), DoctorId(1)], &mu));
        mu.set(DoctorId(2), p);
        // z occupies one of two slots and outranks both members
        assert!(!inst.will_accept(p, &[DoctorId(0), DoctorId(1)], &mu));
        assert!(inst.will_accept(p, &[DoctorId(0)], &mu));
    }

    #[test]
    fn five_doctor_truthful_matching_is_stable() {
        let inst = fixtures::five_doctor_truthful();
        let mu = fixtures::five_doctor_truthful_matching(&inst);
        assert!(inst.is_individually_rational(&mu));
        assert!(inst.find_blocking_pairs(&mu).is_empty());
        assert!(inst.is_stable(&mu));
    }

    #[test]
    fn manipulated_matching_is_unstable_under_true_preferences() {
        let truthful = fixtures::five_doctor_truthful();
        let manipulated = fixtures::five_doctor_manipulated();
        let mu = fixtures::five_doctor_manipulated_matching(&manipulated);
        assert!(manipulated.is_stable(&mu));
        assert!(!truthful.find_blocking_pairs(&mu).is_empty());
        assert!(!truthful.is_stable(&mu));
    }

    #[test]
    fn all_nil_matching_is_blocked() {
        let inst = fixtures::five_doctor_truthful();
        let mu = Matching::unmatched(inst.num_doctors());
        assert!(inst.is_individually_rational(&mu));
        assert!(!inst.find_blocking_pairs(&mu).is_empty());
        assert!(!inst.is_stable(&mu));
    }

    #[test]
    fn empty_instance_is_stable() {
        let inst = Instance::empty();
        assert!(inst.is_stable(&Matching::unmatched(0)));
    }

    #[test]
    fn mutual_first_choice_blocks() {
        let inst = mutual_pair();
        let mu = Matching::unmatched(1);
        assert_eq!(
            inst.find_blocking_pairs(&mu),
            vec![BlockingPair::Single {
                doctor: DoctorId(0),
                program: ProgramId(0)
            }]
        );
    }

    #[test]
    fn individual_rationality_violations() {
        let inst = fixtures::five_doctor_truthful();
        let mut mu = fixtures::five_doctor_truthful_matching(&inst);
        // e is not on r0's ROL
        mu.set(doc(&inst, "r0"), pref(&inst, "e"));
        assert!(!inst.is_individually_rational(&mu));

        let mut mu = fixtures::five_doctor_truthful_matching(&inst);
        // two doctors in quota-1 program c
        mu.set(doc(&inst, "r0"), pref(&inst, "a"));
        assert!(!inst.is_individually_rational(&mu));
    }

    #[test]
    fn dominance_is_strict() {
        let inst = fixtures::five_doctor_truthful();
        let mu = fixtures::five_doctor_truthful_matching(&inst);
        assert!(!inst.dominates(&mu, &mu));
        let nil = Matching::unmatched(inst.num_doctors());
        assert!(inst.dominates(&mu, &nil));
        assert!(!inst.dominates(&nil, &mu));
    }

    #[test]
    fn preprocess_removes_unreciprocated_entries() {
        // single d ranks p, p does not rank d
        let inst = Instance::new(
            vec!["d".into()],
            vec![Program {
                name: "p".into(),
                quota: 1,
                rol: vec![],
            }],
            vec![Single {
                doctor: DoctorId(0),
                rol: vec![ProgramRef::Program(ProgramId(0)), ProgramRef::Nil],
            }],
            vec![],
        )
        .unwrap();
        assert!(!inst.is_preprocessed());
        let pre = inst.preprocess();
        assert_eq!(pre.singles()[0].rol, vec![ProgramRef::Nil]);
        assert_eq!(pre.preprocess(), pre);
    }

    #[test]
    fn preprocess_couple_pair_needs_both_sides() {
        // p0 ranks d1, p1 ranks d1 only (omits d2), p2 ranks d2
        let p = |i| ProgramRef::Program(ProgramId(i));
        let inst = Instance::new(
            vec!["d1".into(), "d2".into()],
            vec![
                Program { name: "p0".into(), quota: 1, rol: vec![DoctorId(0)] },
                Program { name: "p1".into(), quota: 1, rol: vec![DoctorId(0)] },
                Program { name: "p2".into(), quota: 1, rol: vec![DoctorId(1)] },
            ],
            vec![],
            vec![Couple {
                first: DoctorId(0),
                second: DoctorId(1),
                rol: vec![(p(0), p(1)), (p(1), p(2)), (ProgramRef::Nil, p(2)), NIL_PAIR],
            }],
        )
        .unwrap();
        let pre = inst.preprocess();
        assert_eq!(
            pre.couples()[0].rol,
            vec![(p(1), p(2)), (ProgramRef::Nil, p(2)), NIL_PAIR]
        );
        assert!(pre.is_preprocessed());
        assert_eq!(pre.preprocess(), pre);
    }

    #[test]
    fn five_doctor_is_already_consistent() {
        let inst = fixtures::five_doctor_truthful();
        assert!(inst.is_preprocessed());
        assert_eq!(inst.preprocess(), inst);
    }

    #[test]
    fn ranked_for_couple_members() {
        let inst = fixtures::five_doctor_truthful();
        let r1 = doc(&inst, "r1");
        let r2 = doc(&inst, "r2");
        assert_eq!(
            inst.ranked(r1),
            &[pref(&inst, "b"), pref(&inst, "a"), ProgramRef::Nil]
        );
        assert_eq!(
            inst.ranked(r2),
            &[pref(&inst, "e"), pref(&inst, "d"), ProgramRef::Nil]
        );
    }

    #[test]
    fn rank_lookups() {
        let inst = fixtures::five_doctor_truthful();
        let s = &inst.singles()[0];
        for (i, &p) in s.rol.iter().enumerate() {
            assert_eq!(inst.single_rank(0, p), i);
        }
        assert_eq!(inst.single_rank(0, pref(&inst, "e")), s.rol.len());
        let a = inst.find_program("a").unwrap();
        assert_eq!(inst.program_rank(a, doc(&inst, "r3")), Some(0));
        assert_eq!(inst.program_rank(a, doc(&inst, "r2")), None);
    }

    #[test]
    fn validation_errors() {
        let err = Instance::new(vec!["d".into()], vec![], vec![], vec![]).unwrap_err();
        assert!(matches!(err, ModelError::UnassignedDoctor(_)));
        let err = Instance::new(
            vec!["d".into()],
            vec![],
            vec![Single { doctor: DoctorId(0), rol: vec![] }],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::MissingTerminator(_)));
        let err = Instance::new(
            vec![],
            vec![Program { name: "p".into(), quota: 0, rol: vec![] }],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ZeroQuota(_)));
    }
}
