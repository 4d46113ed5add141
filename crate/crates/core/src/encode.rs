//! CNF encoding of stable matching with couples.
//!
//! Three variable families:
//!
//! * `md(d, p)`: doctor `d` is matched into `p` (one per option in
//!   `ranked(d)`, including `Nil`);
//! * `mc(c, i)`: couple `c` is matched to a pair it ranks at index `i` or
//!   better;
//! * `mp(p, i, s)`: exactly `s` of the first `i + 1` doctors on `p`'s ROL
//!   are matched into `p`, for `s <= min(i + 1, quota + 1)`.
//!
//! Satisfying assignments correspond one-to-one with stable matchings of a
//! preprocessed instance (with the pairwise at-most-one encoding; the
//! sequential variant adds auxiliary variables that are not functionally
//! determined).

use std::fmt::Write as _;
use std::ops::Not;

use thiserror::Error;

use crate::model::{CoupleId, DoctorId, Instance, Matching, ProgramId, ProgramRef};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(u32);

impl Var {
    /// `id` is the 1-based DIMACS index.
    pub fn new(id: u32) -> Var {
        assert!(id > 0, "variables are 1-based");
        Var(id)
    }

    pub fn id(self) -> u32 {
        self.0
    }

    pub fn pos(self) -> Lit {
        Lit(self.0 as i32)
    }

    pub fn neg(self) -> Lit {
        Lit(-(self.0 as i32))
    }
}

/// A signed DIMACS literal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(i32);

impl Lit {
    pub fn from_dimacs(v: i32) -> Lit {
        assert!(v != 0, "0 is the clause terminator, not a literal");
        Lit(v)
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }

    pub fn var(self) -> Var {
        Var(self.0.unsigned_abs())
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(-self.0)
    }
}

/// A total truth assignment over variables `1..=len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment(Vec<bool>);

impl Assignment {
    pub fn new(values: Vec<bool>) -> Assignment {
        Assignment(values)
    }

    pub fn num_vars(&self) -> usize {
        self.0.len()
    }

    pub fn value(&self, v: Var) -> bool {
        self.0[v.0 as usize - 1]
    }

    pub fn lit(&self, l: Lit) -> bool {
        self.value(l.var()) == l.is_positive()
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cnf {
    num_vars: u32,
    clauses: Vec<Vec<Lit>>,
}

impl Cnf {
    pub fn new(num_vars: u32) -> Cnf {
        Cnf {
            num_vars,
            clauses: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<Lit>] {
        &self.clauses
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    /// Adds a clause with duplicate literals removed. Tautologies are
    /// dropped; returns whether the clause was kept.
    pub fn add_clause(&mut self, lits: impl IntoIterator<Item = Lit>) -> bool {
        match normalize_clause(lits) {
            Some(c) => {
                if let Some(max) = c.iter().map(|l| l.var().0).max() {
                    self.num_vars = self.num_vars.max(max);
                }
                self.clauses.push(c);
                true
            }
            None => false,
        }
    }

    pub fn evaluate(&self, a: &Assignment) -> bool {
        self.clauses.iter().all(|c| c.iter().any(|&l| a.lit(l)))
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = String::new();
        self.write_dimacs_body(&mut out);
        out
    }

    fn write_dimacs_body(&self, out: &mut String) {
        writeln!(out, "p cnf {} {}", self.num_vars, self.clauses.len()).unwrap();
        for c in &self.clauses {
            for l in c {
                write!(out, "{} ", l.0).unwrap();
            }
            out.push_str("0\n");
        }
    }

    pub fn parse_dimacs(text: &str) -> Result<Cnf, EncodeError> {
        let mut cnf = Cnf::default();
        let mut current = Vec::new();
        let mut declared = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('p') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                match parts[..] {
                    ["cnf", v, _] => {
                        declared = Some(v.parse::<u32>().map_err(|_| {
                            EncodeError::Dimacs(format!("bad header `{line}`"))
                        })?);
                    }
                    _ => return Err(EncodeError::Dimacs(format!("bad header `{line}`"))),
                }
                continue;
            }
            for tok in line.split_whitespace() {
                let v: i32 = tok
                    .parse()
                    .map_err(|_| EncodeError::Dimacs(format!("bad literal `{tok}`")))?;
                if v == 0 {
                    // Keep tautologies and duplicates as written.
                    cnf.clauses.push(std::mem::take(&mut current));
                } else {
                    cnf.num_vars = cnf.num_vars.max(v.unsigned_abs());
                    current.push(Lit(v));
                }
            }
        }
        if !current.is_empty() {
            cnf.clauses.push(current);
        }
        if let Some(v) = declared {
            cnf.num_vars = cnf.num_vars.max(v);
        }
        Ok(cnf)
    }
}

fn normalize_clause(lits: impl IntoIterator<Item = Lit>) -> Option<Vec<Lit>> {
    let mut c: Vec<Lit> = lits.into_iter().collect();
    c.sort_unstable_by_key(|l| (l.var(), l.0));
    c.dedup();
    if c.windows(2).any(|w| w[0].var() == w[1].var()) {
        return None;
    }
    Some(c)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("instance is not preprocessed: {doctor} ranks {program}, which does not rank them")]
    NotPreprocessed { doctor: String, program: String },
    #[error("doctor {doctor} has {count} true match variables")]
    Inconsistent { doctor: String, count: usize },
    #[error("matching assigns {doctor} to {program}, which has no match variable")]
    UnknownAssignment { doctor: String, program: String },
    #[error("malformed DIMACS: {0}")]
    Dimacs(String),
}

/// How the per-doctor at-most-one constraint is expressed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AtMostOne {
    #[default]
    Pairwise,
    /// Sinz's sequential counter; linear size with auxiliary variables.
    Sequential,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EncodeOptions {
    pub at_most_one: AtMostOne,
}

/// Variable ids of the three families. Ids are contiguous from 1 in the
/// order doctors, couples, programs, then any auxiliaries.
#[derive(Clone, Debug, Default)]
pub struct VarRegistry {
    md: Vec<Vec<(ProgramRef, Var)>>,
    mc: Vec<Vec<Var>>,
    mp: Vec<Vec<Vec<Var>>>,
    next: u32,
}

impl VarRegistry {
    fn fresh(&mut self) -> Var {
        self.next += 1;
        Var(self.next)
    }

    pub fn num_vars(&self) -> u32 {
        self.next
    }

    pub fn md(&self, d: DoctorId, p: ProgramRef) -> Option<Var> {
        self.md[d.index()]
            .iter()
            .find(|&&(q, _)| q == p)
            .map(|&(_, v)| v)
    }

    /// `(program, var)` for every option of `d`, in `ranked(d)` order.
    pub fn md_row(&self, d: DoctorId) -> &[(ProgramRef, Var)] {
        &self.md[d.index()]
    }

    pub fn mc(&self, c: CoupleId, i: usize) -> Option<Var> {
        self.mc[c.index()].get(i).copied()
    }

    pub fn mc_row(&self, c: CoupleId) -> &[Var] {
        &self.mc[c.index()]
    }

    pub fn mp(&self, p: ProgramId, i: usize, s: usize) -> Option<Var> {
        self.mp[p.index()].get(i).and_then(|row| row.get(s)).copied()
    }

    /// `mp` rows of `p`: one per non-`Nil` ROL position.
    pub fn mp_rows(&self, p: ProgramId) -> &[Vec<Var>] {
        &self.mp[p.index()]
    }
}

/// A literal or a constant, folded away when clauses are emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Term {
    True,
    False,
    Lit(Lit),
}

impl Not for Term {
    type Output = Term;
    fn not(self) -> Term {
        match self {
            Term::True => Term::False,
            Term::False => Term::True,
            Term::Lit(l) => Term::Lit(!l),
        }
    }
}

impl From<Var> for Term {
    fn from(v: Var) -> Term {
        Term::Lit(v.pos())
    }
}

impl From<Option<Var>> for Term {
    fn from(v: Option<Var>) -> Term {
        v.map_or(Term::False, Term::from)
    }
}

struct Builder<'a> {
    inst: &'a Instance,
    reg: VarRegistry,
    cnf: Cnf,
}

impl Builder<'_> {
    fn clause(&mut self, terms: &[Term]) {
        let mut lits = Vec::with_capacity(terms.len());
        for &t in terms {
            match t {
                Term::True => return,
                Term::False => {}
                Term::Lit(l) => lits.push(l),
            }
        }
        self.cnf.add_clause(lits);
    }

    /// `v ≡ ⋁ₖ ⋀ⱼ terms[k][j]`.
    fn define(&mut self, v: Var, dnf: &[&[Term]]) {
        let mut conjs: Vec<Vec<Lit>> = Vec::new();
        for conj in dnf {
            if conj.contains(&Term::False) {
                continue;
            }
            let lits: Vec<Lit> = conj
                .iter()
                .filter_map(|t| match *t {
                    Term::Lit(l) => Some(l),
                    _ => None,
                })
                .collect();
            if lits.is_empty() {
                self.cnf.add_clause([v.pos()]);
                return;
            }
            conjs.push(lits);
        }
        // conj ⇒ v
        for conj in &conjs {
            self.cnf
                .add_clause(conj.iter().map(|&l| !l).chain(std::iter::once(v.pos())));
        }
        // v ⇒ ⋁ conj, distributed over one pick per conjunction
        let mut picks: Vec<Vec<Lit>> = vec![vec![v.neg()]];
        for conj in &conjs {
            picks = picks
                .into_iter()
                .flat_map(|base| {
                    conj.iter().map(move |&l| {
                        let mut c = base.clone();
                        c.push(l);
                        c
                    })
                })
                .collect();
        }
        for c in picks {
            self.cnf.add_clause(c);
        }
    }

    /// `mp(p, i, s)` with boundary constants: the empty prefix holds zero
    /// doctors, and counts above `min(i + 1, quota + 1)` are impossible.
    fn count(&self, p: ProgramId, i: isize, s: isize) -> Term {
        if s < 0 {
            return Term::False;
        }
        if i < 0 {
            return if s == 0 { Term::True } else { Term::False };
        }
        self.reg.mp(p, i as usize, s as usize).into()
    }

    /// True when `p` is already full with doctors it ranks above `d`, i.e.
    /// `p` would not take `d`. Constant false for `Nil`.
    fn full_before(&self, p: ProgramRef, d: DoctorId) -> Term {
        match p {
            ProgramRef::Nil => Term::False,
            ProgramRef::Program(pid) => {
                let r = self
                    .inst
                    .program_rank(pid, d)
                    .expect("preprocessing guarantees mutual ranking") as isize;
                self.count(pid, r - 1, self.inst.quota(pid) as isize)
            }
        }
    }

    fn md(&self, d: DoctorId, p: ProgramRef) -> Term {
        self.reg.md(d, p).into()
    }
}

fn check_preprocessed(inst: &Instance) -> Result<(), EncodeError> {
    let bad = |d: DoctorId, p: ProgramRef| EncodeError::NotPreprocessed {
        doctor: inst.doctor_name(d).to_string(),
        program: inst.program_name(p).to_string(),
    };
    let ok = |d: DoctorId, p: ProgramRef| match p {
        ProgramRef::Nil => true,
        ProgramRef::Program(id) => inst.acceptable_to(id, d),
    };
    for s in inst.singles() {
        if let Some(&p) = s.rol.iter().find(|&&p| !ok(s.doctor, p)) {
            return Err(bad(s.doctor, p));
        }
    }
    for c in inst.couples() {
        for &(a, b) in &c.rol {
            if !ok(c.first, a) {
                return Err(bad(c.first, a));
            }
            if !ok(c.second, b) {
                return Err(bad(c.second, b));
            }
        }
    }
    Ok(())
}

pub fn encode(inst: &Instance) -> Result<(Cnf, VarRegistry), EncodeError> {
    encode_with(inst, EncodeOptions::default())
}

pub fn encode_with(
    inst: &Instance,
    opts: EncodeOptions,
) -> Result<(Cnf, VarRegistry), EncodeError> {
    check_preprocessed(inst)?;
    let mut b = Builder {
        inst,
        reg: VarRegistry::default(),
        cnf: Cnf::new(0),
    };

    // Variables.
    for d in inst.doctors() {
        let row = inst
            .ranked(d)
            .iter()
            .map(|&p| (p, b.reg.fresh()))
            .collect();
        b.reg.md.push(row);
    }
    for c in inst.couples() {
        let row = (0..c.rol.len()).map(|_| b.reg.fresh()).collect();
        b.reg.mc.push(row);
    }
    for p in inst.programs() {
        let q = p.quota as usize;
        let rows = (0..p.rol.len())
            .map(|i| (0..=(i + 1).min(q + 1)).map(|_| b.reg.fresh()).collect())
            .collect();
        b.reg.mp.push(rows);
    }

    // Each doctor is matched to exactly one ranked option.
    for d in inst.doctors() {
        let row: Vec<Var> = b.reg.md_row(d).iter().map(|&(_, v)| v).collect();
        match opts.at_most_one {
            AtMostOne::Pairwise => {
                for (i, &x) in row.iter().enumerate() {
                    for &y in &row[i + 1..] {
                        b.cnf.add_clause([x.neg(), y.neg()]);
                    }
                }
            }
            AtMostOne::Sequential => {
                if row.len() > 1 {
                    let aux: Vec<Var> = (0..row.len() - 1).map(|_| b.reg.fresh()).collect();
                    let n = row.len();
                    b.cnf.add_clause([row[0].neg(), aux[0].pos()]);
                    for i in 1..n - 1 {
                        b.cnf.add_clause([row[i].neg(), aux[i].pos()]);
                        b.cnf.add_clause([aux[i - 1].neg(), aux[i].pos()]);
                        b.cnf.add_clause([row[i].neg(), aux[i - 1].neg()]);
                    }
                    b.cnf.add_clause([row[n - 1].neg(), aux[n - 2].neg()]);
                }
            }
        }
        b.cnf.add_clause(row.iter().map(|v| v.pos()));
    }

    // Prefix semantics of mc; the couple lands somewhere on its ROL,
    // asserted at the terminator index.
    for cid in inst.couple_ids() {
        let c = inst.couple(cid);
        for (k, &(p1, p2)) in c.rol.iter().enumerate() {
            let v = b.reg.mc(cid, k).unwrap();
            let here = [b.md(c.first, p1), b.md(c.second, p2)];
            if k == 0 {
                b.define(v, &[&here]);
            } else {
                let prev = [Term::from(b.reg.mc(cid, k - 1))];
                b.define(v, &[&here, &prev]);
            }
        }
        let last = b.reg.mc(cid, c.rol.len() - 1).unwrap();
        b.cnf.add_clause([last.pos()]);
    }

    // Running counts along each program ROL, capped at the quota.
    for pid in inst.program_ids() {
        let prog = inst.program(pid);
        let q = prog.quota as isize;
        for (i, &d) in prog.rol.iter().enumerate() {
            let x = b.md(d, ProgramRef::Program(pid));
            let i = i as isize;
            let width = b.reg.mp_rows(pid)[i as usize].len();
            for s in 0..width as isize {
                let v = b.reg.mp(pid, i as usize, s as usize).unwrap();
                let stay = [b.count(pid, i - 1, s), !x];
                let grow = [b.count(pid, i - 1, s - 1), x];
                b.define(v, &[&stay, &grow]);
            }
            if let Some(over) = b.reg.mp(pid, i as usize, (q + 1) as usize) {
                b.cnf.add_clause([over.neg()]);
            }
        }
    }

    // A single is matched at least as well as p, or p is full of doctors
    // it prefers.
    for s in inst.singles() {
        for (r, &p) in s.rol.iter().enumerate() {
            if p.is_nil() {
                continue;
            }
            let mut terms: Vec<Term> = s.rol[..=r].iter().map(|&q| b.md(s.doctor, q)).collect();
            terms.push(b.full_before(p, s.doctor));
            b.clause(&terms);
        }
    }

    for cid in inst.couple_ids() {
        let c = inst.couple(cid);
        let (d1, d2) = (c.first, c.second);
        let last = c.rol.len() - 1;
        for (r, &(p1, p2)) in c.rol[..last].iter().enumerate() {
            let at_least = Term::from(b.reg.mc(cid, r));
            if p1 != p2 {
                // Distinct targets: whichever member is already in place,
                // the other target must refuse; otherwise one must refuse.
                let full1 = b.full_before(p1, d1);
                let full2 = b.full_before(p2, d2);
                let in1 = b.md(d1, p1);
                let in2 = b.md(d2, p2);
                b.clause(&[!in1, at_least, full2]);
                b.clause(&[!in2, at_least, full1]);
                b.clause(&[in1, in2, at_least, full1, full2]);
            } else {
                // Same program: if one member already sits in p, p must not
                // take the other without bumping; otherwise p lacks room
                // for both.
                let pid = p1.program().expect("only the terminator pairs Nil with Nil");
                let q = inst.quota(pid) as isize;
                let r1 = inst.program_rank(pid, d1).unwrap() as isize;
                let r2 = inst.program_rank(pid, d2).unwrap() as isize;
                let in1 = b.md(d1, p1);
                let in2 = b.md(d2, p1);
                if r1 < r2 {
                    b.clause(&[!in1, at_least, b.count(pid, r2 - 1, q)]);
                    b.clause(&[!in2, at_least, b.count(pid, r2 - 1, q - 1)]);
                } else {
                    b.clause(&[!in1, at_least, b.count(pid, r1 - 1, q - 1)]);
                    b.clause(&[!in2, at_least, b.count(pid, r1 - 1, q)]);
                }
                b.clause(&[
                    in1,
                    in2,
                    at_least,
                    b.count(pid, r1 - 1, q),
                    b.count(pid, r1 - 1, q - 1),
                    b.count(pid, r2 - 1, q),
                    b.count(pid, r2 - 1, q - 1),
                ]);
            }
        }
    }

    b.cnf.num_vars = b.reg.next;
    Ok((b.cnf, b.reg))
}

/// Reads the matching out of a model of the encoding.
pub fn decode(a: &Assignment, reg: &VarRegistry, inst: &Instance) -> Result<Matching, EncodeError> {
    let mut mu = Matching::unmatched(inst.num_doctors());
    for d in inst.doctors() {
        let on: Vec<ProgramRef> = reg
            .md_row(d)
            .iter()
            .filter(|&&(_, v)| a.value(v))
            .map(|&(p, _)| p)
            .collect();
        if on.len() != 1 {
            return Err(EncodeError::Inconsistent {
                doctor: inst.doctor_name(d).to_string(),
                count: on.len(),
            });
        }
        mu.set(d, on[0]);
    }
    Ok(mu)
}

fn md_of(mu: &Matching, d: DoctorId, reg: &VarRegistry, inst: &Instance) -> Result<Var, EncodeError> {
    reg.md(d, mu.get(d))
        .ok_or_else(|| EncodeError::UnknownAssignment {
            doctor: inst.doctor_name(d).to_string(),
            program: inst.program_name(mu.get(d)).to_string(),
        })
}

/// `⋁_d ¬md(d, µ(d))`: excludes exactly `mu` from the models.
pub fn blocking_clause(
    mu: &Matching,
    reg: &VarRegistry,
    inst: &Instance,
) -> Result<Vec<Lit>, EncodeError> {
    inst.doctors()
        .map(|d| md_of(mu, d, reg, inst).map(Var::neg))
        .collect()
}

/// Clauses forcing every single and couple to do at least as well as under
/// `mu`. Together with [`blocking_clause`] any model strictly dominates `mu`.
pub fn domination_constraint(
    mu: &Matching,
    reg: &VarRegistry,
    inst: &Instance,
) -> Result<Vec<Vec<Lit>>, EncodeError> {
    let mut out = Vec::new();
    for (i, s) in inst.singles().iter().enumerate() {
        md_of(mu, s.doctor, reg, inst)?;
        let r = inst.single_rank(i, mu.get(s.doctor));
        out.push(
            s.rol[..=r]
                .iter()
                .map(|&p| reg.md(s.doctor, p).expect("ROL entries have variables").pos())
                .collect(),
        );
    }
    for cid in inst.couple_ids() {
        let r = inst.couple_rank(cid, inst.couple_outcome(cid, mu));
        let v = reg.mc(cid, r).ok_or_else(|| {
            let c = inst.couple(cid);
            EncodeError::UnknownAssignment {
                doctor: format!("{}+{}", inst.doctor_name(c.first), inst.doctor_name(c.second)),
                program: format!(
                    "{}+{}",
                    inst.program_name(mu.get(c.first)),
                    inst.program_name(mu.get(c.second))
                ),
            }
        })?;
        out.push(vec![v.pos()]);
    }
    Ok(out)
}

/// DIMACS text with `c map` comments naming every family variable, so a
/// model can be decoded from the file alone:
///
/// ```text
/// c map d <doctor> <program> <var>
/// c map c <doctor1> <doctor2> <index> <var>
/// c map p <program> <index> <count> <var>
/// ```
pub fn to_dimacs(cnf: &Cnf, reg: &VarRegistry, inst: &Instance) -> String {
    let mut out = String::new();
    writeln!(out, "c smpc encoding").unwrap();
    for d in inst.doctors() {
        for &(p, v) in reg.md_row(d) {
            writeln!(out, "c map d {} {} {}", inst.doctor_name(d), inst.program_name(p), v.0).unwrap();
        }
    }
    for cid in inst.couple_ids() {
        let c = inst.couple(cid);
        for (i, v) in reg.mc_row(cid).iter().enumerate() {
            writeln!(
                out,
                "c map c {} {} {} {}",
                inst.doctor_name(c.first),
                inst.doctor_name(c.second),
                i,
                v.0
            )
            .unwrap();
        }
    }
    for pid in inst.program_ids() {
        for (i, row) in reg.mp_rows(pid).iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                writeln!(out, "c map p {} {} {} {}", inst.program(pid).name, i, s, v.0).unwrap();
            }
        }
    }
    cnf.write_dimacs_body(&mut out);
    out
}

/// `(doctor, program, var)` triples recovered from `c map d` comments.
pub fn read_doctor_map(dimacs: &str) -> Vec<(String, String, Var)> {
    dimacs
        .lines()
        .filter_map(|l| l.strip_prefix("c map d "))
        .filter_map(|rest| {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            match parts[..] {
                [d, p, v] => Some((d.to_string(), p.to_string(), Var(v.parse().ok()?))),
                _ => None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{Program, Single};
    use batsat::{lbool, BasicSolver, SolverInterface};

    /// Independent model enumeration straight on batsat, so these unit
    /// tests do not depend on the session layer.
    fn all_models(cnf: &Cnf) -> Vec<Assignment> {
        let mut solver = BasicSolver::default();
        let vars: Vec<batsat::Var> = (0..cnf.num_vars()).map(|_| solver.new_var_default()).collect();
        let lit = |l: Lit| batsat::Lit::new(vars[l.var().0 as usize - 1], l.is_positive());
        for c in cnf.clauses() {
            let mut cl: Vec<batsat::Lit> = c.iter().map(|&l| lit(l)).collect();
            solver.add_clause_reuse(&mut cl);
        }
        let mut out = Vec::new();
        while solver.solve_limited(&[]) == lbool::TRUE {
            let a = Assignment::new(
                vars.iter().map(|&v| solver.value_var(v) == lbool::TRUE).collect(),
            );
            let mut block: Vec<batsat::Lit> = vars
                .iter()
                .map(|&v| batsat::Lit::new(v, solver.value_var(v) != lbool::TRUE))
                .collect();
            out.push(a);
            if !solver.add_clause_reuse(&mut block) {
                break;
            }
        }
        out
    }

    #[test]
    fn five_doctor_has_a_single_model() {
        let inst = fixtures::five_doctor_truthful();
        let (cnf, reg) = encode(&inst).unwrap();
        let models = all_models(&cnf);
        assert_eq!(models.len(), 1);
        let mu = decode(&models[0], &reg, &inst).unwrap();
        assert_eq!(mu, fixtures::five_doctor_truthful_matching(&inst));
    }

    #[test]
    fn five_doctor_sizes_match_hand_expansion() {
        // Expanded by hand for this market:
        //   vars: md 5+3+3+3+3 = 17, mc 3+3 = 6,
        //         mp a,d (3 rows: 2+3+3) = 8 each, b,c,e (2+3) = 5 each -> 31;
        //         total 54
        //   at-most-one: C(5,2) + 4*C(3,2) = 22; at-least-one: 5
        //   couple prefixes: 3 (k=0) + 4 + 4 + 1 unit = 12 each -> 24
        //   program counts: 2+2 at i=0, then 3+5+3+1 at i=1, 3+5+5+1 at
        //      i=2 -> 30 for a and d, 16 for b, c, e -> 108
        //   single stability: one clause per program on r0's list = 4
        //   couple stability: three clauses per (p1,p2) entry, four
        //      entries = 12
        //   total 27 + 24 + 108 + 4 + 12 = 175
        let inst = fixtures::five_doctor_truthful();
        let (cnf, reg) = encode(&inst).unwrap();
        assert_eq!(reg.num_vars(), 54);
        assert_eq!(cnf.num_vars(), 54);
        assert_eq!(cnf.num_clauses(), 175);
    }

    #[test]
    fn forced_single_match() {
        let inst = crate::model::Instance::new(
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
        .unwrap();
        let (cnf, reg) = encode(&inst).unwrap();
        assert_eq!(reg.md_row(DoctorId(0)).len(), 2);
        let models = all_models(&cnf);
        assert_eq!(models.len(), 1);
        let p = ProgramRef::Program(ProgramId(0));
        assert!(models[0].value(reg.md(DoctorId(0), p).unwrap()));
        assert_eq!(decode(&models[0], &reg, &inst).unwrap().get(DoctorId(0)), p);
    }

    #[test]
    fn rejects_unpreprocessed() {
        let inst = crate::model::Instance::new(
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
        assert!(matches!(encode(&inst), Err(EncodeError::NotPreprocessed { .. })));
        assert!(encode(&inst.preprocess()).is_ok());
    }

    #[test]
    fn blocking_clause_has_one_literal_per_doctor() {
        let inst = fixtures::five_doctor_truthful();
        let (mut cnf, reg) = encode(&inst).unwrap();
        let mu = fixtures::five_doctor_truthful_matching(&inst);
        let clause = blocking_clause(&mu, &reg, &inst).unwrap();
        assert_eq!(clause.len(), 5);
        assert!(clause.iter().all(|l| !l.is_positive()));
        cnf.add_clause(clause);
        assert!(all_models(&cnf).is_empty());
    }

    #[test]
    fn domination_constraint_shapes() {
        let inst = fixtures::five_doctor_truthful();
        let (_, reg) = encode(&inst).unwrap();
        let mut mu = fixtures::five_doctor_truthful_matching(&inst);
        let r0 = inst.find_doctor("r0").unwrap();
        let a = ProgramRef::Program(inst.find_program("a").unwrap());
        mu.set(r0, a);
        let cons = domination_constraint(&mu, &reg, &inst).unwrap();
        // r0 on its top choice: a single literal
        assert_eq!(cons[0], vec![reg.md(r0, a).unwrap().pos()]);
        // couple (r1,r2) at ROL index 0: unit on mc[0]
        assert_eq!(cons[1], vec![reg.mc(CoupleId(0), 0).unwrap().pos()]);
        assert_eq!(cons.len(), 3);
    }

    #[test]
    fn decode_rejects_inconsistent_models() {
        let inst = fixtures::five_doctor_truthful();
        let (cnf, reg) = encode(&inst).unwrap();
        let a = Assignment::new(vec![false; cnf.num_vars() as usize]);
        assert!(matches!(
            decode(&a, &reg, &inst),
            Err(EncodeError::Inconsistent { count: 0, .. })
        ));
    }

    #[test]
    fn dimacs_is_deterministic_and_self_describing() {
        let inst = fixtures::five_doctor_truthful();
        let (cnf, reg) = encode(&inst).unwrap();
        let text = to_dimacs(&cnf, &reg, &inst);
        let (cnf2, reg2) = encode(&inst).unwrap();
        assert_eq!(text, to_dimacs(&cnf2, &reg2, &inst));
        assert!(text.contains(&format!("p cnf {} {}", cnf.num_vars(), cnf.num_clauses())));
        let parsed = Cnf::parse_dimacs(&text).unwrap();
        assert_eq!(parsed, cnf);
        let map = read_doctor_map(&text);
        let total: usize = inst.doctors().map(|d| reg.md_row(d).len()).sum();
        assert_eq!(map.len(), total);
        assert!(map.contains(&("r0".to_string(), "c".to_string(), reg.md(DoctorId(0), ProgramRef::Program(ProgramId(2))).unwrap())));
    }

    #[test]
    fn cnf_drops_tautologies_and_duplicates() {
        let mut cnf = Cnf::new(2);
        assert!(!cnf.add_clause([Lit(1), Lit(-1)]));
        assert!(cnf.add_clause([Lit(2), Lit(2), Lit(-1)]));
        assert_eq!(cnf.clauses(), &[vec![Lit(-1), Lit(2)]]);
    }

    #[test]
    fn sequential_amo_preserves_matchings() {
        let inst = fixtures::five_doctor_truthful();
        let (cnf, reg) = encode_with(
            &inst,
            EncodeOptions {
                at_most_one: AtMostOne::Sequential,
            },
        )
        .unwrap();
        let mut seen: Vec<Matching> = all_models(&cnf)
            .iter()
            .map(|m| decode(m, &reg, &inst).unwrap())
            .collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen, vec![fixtures::five_doctor_truthful_matching(&inst)]);
    }
}
