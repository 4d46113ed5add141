//! Driving a CDCL solver: one-shot or iterated solving with accumulated
//! clauses.
//!
//! Two backends sit behind [`Session`]:
//!
//! * `External`: writes DIMACS to a temporary file, runs a solver executable
//!   on it and reads the `s`/`v` lines from its standard output. The whole
//!   formula is re-solved on every call.
//! * `InProcess`: an incremental batsat instance; clauses added to the
//!   session go straight into the live solver.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use batsat::{lbool, Callbacks, SolverInterface};

use crate::encode::{Assignment, Cnf, Lit};

/// Overrides the external solver executable.
pub const SOLVER_ENV: &str = "SMPC_SAT_SOLVER";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Sat,
    Unsat,
    /// Timeout, crash or unreadable output; never to be read as UNSAT.
    Unknown,
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub decisions: Option<u64>,
    pub conflicts: Option<u64>,
    pub wall: Duration,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Present iff `status == Sat`; assigns every variable of the session.
    pub model: Option<Assignment>,
    pub stats: SolveStats,
    pub diagnostic: Option<String>,
}

impl SolveResult {
    fn unknown(why: String, wall: Duration) -> SolveResult {
        SolveResult {
            status: SolveStatus::Unknown,
            model: None,
            stats: SolveStats {
                wall,
                ..SolveStats::default()
            },
            diagnostic: Some(why),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    InProcess,
    /// `program [args..] <dimacs-path>`
    External { program: PathBuf, args: Vec<String> },
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub backend: Backend,
    /// Per `solve` call.
    pub timeout: Duration,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::in_process()
    }
}

impl SolverConfig {
    pub fn in_process() -> SolverConfig {
        SolverConfig {
            backend: Backend::InProcess,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn external(program: impl Into<PathBuf>) -> SolverConfig {
        SolverConfig {
            backend: Backend::External {
                program: program.into(),
                args: Vec::new(),
            },
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// External backend when `SMPC_SAT_SOLVER` is set, in-process otherwise.
    pub fn from_env() -> SolverConfig {
        match std::env::var_os(SOLVER_ENV) {
            Some(p) if !p.is_empty() => SolverConfig::external(p),
            _ => SolverConfig::in_process(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> SolverConfig {
        self.timeout = timeout;
        self
    }
}

/// A formula plus everything appended to it. Solving a session is solving
/// the base clauses together with every added clause.
pub struct Session {
    num_vars: u32,
    base: Cnf,
    added: Vec<Vec<Lit>>,
    timeout: Duration,
    engine: Engine,
}

enum Engine {
    InProcess(Box<Incremental>),
    External { program: PathBuf, args: Vec<String> },
}

impl Session {
    pub fn new(cnf: Cnf, config: &SolverConfig) -> Session {
        let engine = match &config.backend {
            Backend::InProcess => Engine::InProcess(Box::new(Incremental::new(&cnf))),
            Backend::External { program, args } => Engine::External {
                program: program.clone(),
                args: args.clone(),
            },
        };
        Session {
            num_vars: cnf.num_vars(),
            base: cnf,
            added: Vec::new(),
            timeout: config.timeout,
            engine,
        }
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn added(&self) -> &[Vec<Lit>] {
        &self.added
    }

    /// Adds a clause permanently. An empty clause makes every later solve
    /// UNSAT.
    pub fn add_clause(&mut self, clause: Vec<Lit>) {
        if let Some(max) = clause.iter().map(|l| l.var().id()).max() {
            self.num_vars = self.num_vars.max(max);
        }
        if let Engine::InProcess(s) = &mut self.engine {
            s.add_clause(&clause);
        }
        self.added.push(clause);
    }

    pub fn solve(&mut self) -> SolveResult {
        let started = Instant::now();
        let mut result = match &mut self.engine {
            Engine::InProcess(s) => s.solve(self.num_vars, self.timeout),
            Engine::External { program, args } => run_external(
                program,
                args,
                &self.base,
                &self.added,
                self.num_vars,
                self.timeout,
            ),
        };
        result.stats.wall = started.elapsed();
        if let Some(model) = &result.model {
            if !self.satisfied_by(model) {
                return SolveResult::unknown(
                    "solver reported a model that violates the formula".into(),
                    result.stats.wall,
                );
            }
        }
        result
    }

    fn satisfied_by(&self, model: &Assignment) -> bool {
        self.base.evaluate(model)
            && self
                .added
                .iter()
                .all(|c| c.iter().any(|&l| model.lit(l)))
    }
}

/// Callbacks that stop the search once a deadline passes.
#[derive(Default)]
struct Deadline {
    until: Option<Instant>,
}

impl Callbacks for Deadline {
    fn stop(&self) -> bool {
        self.until.is_some_and(|t| Instant::now() >= t)
    }
}

struct Incremental {
    solver: batsat::Solver<Deadline>,
    vars: Vec<batsat::Var>,
    /// Set once an empty clause was added.
    refuted: bool,
}

impl Incremental {
    fn new(cnf: &Cnf) -> Incremental {
        let mut s = Incremental {
            solver: batsat::Solver::new(Default::default(), Deadline::default()),
            vars: Vec::new(),
            refuted: false,
        };
        s.ensure_vars(cnf.num_vars());
        for c in cnf.clauses() {
            s.add_clause(c);
        }
        s
    }

    fn ensure_vars(&mut self, n: u32) {
        while (self.vars.len() as u32) < n {
            self.vars.push(self.solver.new_var_default());
        }
    }

    fn lit(&self, l: Lit) -> batsat::Lit {
        batsat::Lit::new(self.vars[l.var().id() as usize - 1], l.is_positive())
    }

    fn add_clause(&mut self, clause: &[Lit]) {
        if clause.is_empty() {
            self.refuted = true;
            return;
        }
        if let Some(max) = clause.iter().map(|l| l.var().id()).max() {
            self.ensure_vars(max);
        }
        let mut lits: Vec<batsat::Lit> = clause.iter().map(|&l| self.lit(l)).collect();
        // `false` only means the solver is now known UNSAT; solve reports it.
        self.solver.add_clause_reuse(&mut lits);
    }

    fn solve(&mut self, num_vars: u32, timeout: Duration) -> SolveResult {
        self.ensure_vars(num_vars);
        let decisions0 = self.solver.num_decisions();
        let conflicts0 = self.solver.num_conflicts();
        let stats = |s: &Self| SolveStats {
            decisions: Some(s.solver.num_decisions() - decisions0),
            conflicts: Some(s.solver.num_conflicts() - conflicts0),
            wall: Duration::ZERO,
        };
        if self.refuted {
            return SolveResult {
                status: SolveStatus::Unsat,
                model: None,
                stats: stats(self),
                diagnostic: None,
            };
        }
        self.solver.cb_mut().until = Instant::now().checked_add(timeout);
        let res = self.solver.solve_limited(&[]);
        self.solver.cb_mut().until = None;
        if res == lbool::TRUE {
            let model = Assignment::new(
                self.vars
                    .iter()
                    .map(|&v| self.solver.value_var(v) == lbool::TRUE)
                    .collect(),
            );
            SolveResult {
                status: SolveStatus::Sat,
                model: Some(model),
                stats: stats(self),
                diagnostic: None,
            }
        } else if res == lbool::FALSE {
            SolveResult {
                status: SolveStatus::Unsat,
                model: None,
                stats: stats(self),
                diagnostic: None,
            }
        } else {
            SolveResult {
                status: SolveStatus::Unknown,
                model: None,
                stats: stats(self),
                diagnostic: Some(format!("in-process solver stopped after {timeout:?}")),
            }
        }
    }
}

fn scratch_path(tag: &str) -> PathBuf {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("smpc-{}-{}-{}.{}", std::process::id(), n, tag, "tmp"))
}

/// Removes the file when dropped.
struct Scratch(PathBuf);

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn run_external(
    program: &PathBuf,
    args: &[String],
    base: &Cnf,
    added: &[Vec<Lit>],
    num_vars: u32,
    timeout: Duration,
) -> SolveResult {
    let started = Instant::now();
    let cnf_file = Scratch(scratch_path("cnf"));
    let out_file = Scratch(scratch_path("out"));
    let write = || -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(File::create(&cnf_file.0)?);
        writeln!(f, "p cnf {} {}", num_vars, base.num_clauses() + added.len())?;
        for c in base.clauses().iter().chain(added.iter()) {
            for l in c {
                write!(f, "{} ", l.to_dimacs())?;
            }
            writeln!(f, "0")?;
        }
        f.flush()
    };
    if let Err(e) = write() {
        return SolveResult::unknown(format!("cannot write DIMACS: {e}"), started.elapsed());
    }
    let stdout = match File::create(&out_file.0) {
        Ok(f) => f,
        Err(e) => {
            return SolveResult::unknown(format!("cannot create output file: {e}"), started.elapsed())
        }
    };
    let mut child = match Command::new(program)
        .args(args)
        .arg(&cnf_file.0)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(Stdio::null())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => {
            return SolveResult::unknown(
                format!("cannot run {}: {e}", program.display()),
                started.elapsed(),
            )
        }
    };
    let deadline = started + timeout;
    let mut poll = Duration::from_micros(200);
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return SolveResult::unknown(
                    format!("{} timed out after {timeout:?}", program.display()),
                    started.elapsed(),
                );
            }
            Ok(None) => {
                std::thread::sleep(poll);
                poll = (poll * 2).min(Duration::from_millis(20));
            }
            Err(e) => {
                return SolveResult::unknown(format!("wait failed: {e}"), started.elapsed());
            }
        }
    }
    let text = match fs::read_to_string(&out_file.0) {
        Ok(t) => t,
        Err(e) => return SolveResult::unknown(format!("cannot read output: {e}"), started.elapsed()),
    };
    parse_solver_output(&text, num_vars)
}

/// Parses competition-style solver output (`s` and `v` lines).
pub fn parse_solver_output(text: &str, num_vars: u32) -> SolveResult {
    let mut status = None;
    let mut values = vec![false; num_vars as usize];
    let mut saw_values = false;
    for line in text.lines() {
        let line = line.trim();
        if let Some(s) = line.strip_prefix("s ") {
            status = match s.trim() {
                "SATISFIABLE" => Some(SolveStatus::Sat),
                "UNSATISFIABLE" => Some(SolveStatus::Unsat),
                _ => Some(SolveStatus::Unknown),
            };
        } else if let Some(v) = line.strip_prefix("v ").or_else(|| (line == "v").then_some("")) {
            saw_values = true;
            for tok in v.split_whitespace() {
                let Ok(n) = tok.parse::<i64>() else {
                    return SolveResult::unknown(format!("bad value token `{tok}`"), Duration::ZERO);
                };
                if n == 0 {
                    continue;
                }
                let idx = n.unsigned_abs() as usize;
                if idx <= values.len() {
                    values[idx - 1] = n > 0;
                }
            }
        }
    }
    match status {
        Some(SolveStatus::Sat) if saw_values || num_vars == 0 => SolveResult {
            status: SolveStatus::Sat,
            model: Some(Assignment::new(values)),
            stats: SolveStats::default(),
            diagnostic: None,
        },
        Some(SolveStatus::Sat) => {
            SolveResult::unknown("SATISFIABLE without a model".into(), Duration::ZERO)
        }
        Some(SolveStatus::Unsat) => SolveResult {
            status: SolveStatus::Unsat,
            model: None,
            stats: SolveStats::default(),
            diagnostic: None,
        },
        _ => SolveResult::unknown("no status line in solver output".into(), Duration::ZERO),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::Var;

    fn lit(v: i32) -> Lit {
        Lit::from_dimacs(v)
    }

    #[test]
    fn empty_formula_is_sat() {
        let mut s = Session::new(Cnf::new(3), &SolverConfig::in_process());
        let r = s.solve();
        assert_eq!(r.status, SolveStatus::Sat);
        assert_eq!(r.model.unwrap().num_vars(), 3);
    }

    #[test]
    fn contradiction_is_unsat() {
        let mut cnf = Cnf::new(1);
        cnf.add_clause([lit(1)]);
        cnf.add_clause([lit(-1)]);
        let r = Session::new(cnf, &SolverConfig::in_process()).solve();
        assert_eq!(r.status, SolveStatus::Unsat);
        assert!(r.model.is_none());
    }

    #[test]
    fn added_unit_is_respected() {
        let mut cnf = Cnf::new(2);
        cnf.add_clause([lit(1), lit(2)]);
        let mut s = Session::new(cnf, &SolverConfig::in_process());
        s.add_clause(vec![lit(-1)]);
        let m = s.solve().model.unwrap();
        assert!(!m.value(Var::new(1)));
        assert!(m.value(Var::new(2)));
        s.add_clause(vec![lit(-2)]);
        assert_eq!(s.solve().status, SolveStatus::Unsat);
    }

    #[test]
    fn empty_clause_refutes() {
        let mut s = Session::new(Cnf::new(1), &SolverConfig::in_process());
        s.add_clause(vec![]);
        assert_eq!(s.solve().status, SolveStatus::Unsat);
    }

    #[test]
    fn blocking_enumerates_all_models() {
        // x1 xor x2 has two models
        let mut cnf = Cnf::new(2);
        cnf.add_clause([lit(1), lit(2)]);
        cnf.add_clause([lit(-1), lit(-2)]);
        let mut s = Session::new(cnf, &SolverConfig::in_process());
        let mut n = 0;
        while let Some(m) = s.solve().model {
            n += 1;
            let block = (1..=2)
                .map(|i| {
                    let v = Var::new(i);
                    if m.value(v) {
                        v.neg()
                    } else {
                        v.pos()
                    }
                })
                .collect();
            s.add_clause(block);
        }
        assert_eq!(n, 2);
    }

    #[test]
    fn parses_competition_output() {
        let r = parse_solver_output("c hi\ns SATISFIABLE\nv 1 -2\nv 3 0\n", 3);
        assert_eq!(r.status, SolveStatus::Sat);
        assert_eq!(r.model.unwrap().values(), &[true, false, true]);
        assert_eq!(parse_solver_output("s UNSATISFIABLE\n", 3).status, SolveStatus::Unsat);
        assert_eq!(parse_solver_output("garbage", 3).status, SolveStatus::Unknown);
        assert_eq!(parse_solver_output("s SATISFIABLE\n", 3).status, SolveStatus::Unknown);
    }

    #[test]
    fn missing_executable_is_unknown() {
        let cfg = SolverConfig::external("/nonexistent/solver-binary");
        let r = Session::new(Cnf::new(1), &cfg).solve();
        assert_eq!(r.status, SolveStatus::Unknown);
        assert!(r.diagnostic.unwrap().contains("cannot run"));
    }

    #[test]
    fn lying_solver_is_caught() {
        // `echo` prints its argument, not a model; fake a SAT claim via sh.
        let cfg = SolverConfig {
            backend: Backend::External {
                program: "sh".into(),
                args: vec!["-c".into(), "echo 's SATISFIABLE'; echo 'v -1 0'".into(), "sh".into()],
            },
            timeout: Duration::from_secs(10),
        };
        let mut cnf = Cnf::new(1);
        cnf.add_clause([lit(1)]);
        let r = Session::new(cnf, &cfg).solve();
        assert_eq!(r.status, SolveStatus::Unknown);
    }

    #[test]
    fn external_timeout_is_unknown() {
        let cfg = SolverConfig {
            backend: Backend::External {
                program: "sh".into(),
                args: vec!["-c".into(), "sleep 5".into(), "sh".into()],
            },
            timeout: Duration::from_millis(100),
        };
        let r = Session::new(Cnf::new(1), &cfg).solve();
        assert_eq!(r.status, SolveStatus::Unknown);
        assert!(r.stats.wall < Duration::from_secs(4));
    }
}
