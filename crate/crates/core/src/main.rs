use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use smpc::algos::{self, AlgoError, EnumStatus, ParetoMode, StableSet};
use smpc::bench::{self, BatchOptions, Cell, DaAlgo};
use smpc::da::{self, CoupleOrder, DaCaps, DaError, DaOutcome};
use smpc::encode;
use smpc::format::{parse_any, parse_matching, write_json, write_matching, write_text};
use smpc::gen::{self, GenConfig};
use smpc::model::Instance;
use smpc::oracle;
use smpc::satio::SolverConfig;

#[derive(Parser)]
#[command(name = "smpc", version, about = "Stable matching with couples via SAT")]
struct Cli {
    /// RNG seed for `gen` and the base seed for `bench`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for `bench`; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Per-call SAT time limit in seconds.
    #[arg(long, global = true, default_value_t = 300.0)]
    sat_timeout: f64,
    /// External DIMACS solver; overrides SMPC_SAT_SOLVER. Without either,
    /// the built-in solver is used.
    #[arg(long, global = true)]
    solver: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct DaArgs {
    /// `<seed>` shuffles couples; anything else is a file naming one couple
    /// member per line.
    #[arg(long)]
    couple_order: Option<String>,
    /// Proposal-event cap (default 10·|D|·longest ROL).
    #[arg(long)]
    da_cap: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random market.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        couples_pct: f64,
        #[arg(long, default_value_t = 5)]
        single_rol_len: usize,
        #[arg(long, default_value_t = 15)]
        couple_rol_len: usize,
        #[arg(long, default_value_t = 1)]
        quota: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the CNF encoding as DIMACS.
    Encode {
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find one stable matching.
    Solve { instance: PathBuf },
    /// List every stable matching, tagging the RP_opt ones.
    Enumerate {
        instance: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Improve a stable matching to an RP_opt one.
    Pareto {
        instance: PathBuf,
        /// Starting matching (`r0=a r1=@nil ...`); defaults to the first
        /// one the solver finds.
        #[arg(long)]
        matching: Option<String>,
        #[arg(long)]
        incremental: bool,
    },
    /// Run a deferred-acceptance heuristic.
    Da {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "kpr")]
        algo: DaAlgo,
        #[command(flatten)]
        da: DaArgs,
    },
    /// Brute-force every stable matching (small markets only).
    Oracle { instance: PathBuf },
    /// Batch experiments over a grid of market sizes and couple fractions.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![200usize, 500, 1000])]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01f64, 0.05, 0.10, 0.20])]
        couples_pct: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long)]
        no_da: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        da: DaArgs,
    },
    /// Pareto-improvement graph in Graphviz format.
    Graph {
        instance: PathBuf,
        /// Draw the matching this algorithm finds as a box.
        #[arg(long, value_enum)]
        da: Option<DaAlgo>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        msg: msg.to_string(),
    }
}

fn solver_failure(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        msg: msg.to_string(),
    }
}

fn invariant(msg: impl std::fmt::Display) -> Failure {
    Failure {
        code: 3,
        msg: msg.to_string(),
    }
}

impl From<AlgoError> for Failure {
    fn from(e: AlgoError) -> Self {
        match e {
            AlgoError::Unknown(_) => solver_failure(e),
            AlgoError::Invariant(_) => invariant(e),
            AlgoError::Encode(_) | AlgoError::NotStable(_) => usage(e),
        }
    }
}

impl From<DaError> for Failure {
    fn from(e: DaError) -> Self {
        match e {
            DaError::Unstable(_) => invariant(e),
            DaError::NotPreprocessed | DaError::BadOrder => usage(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn solver_config(cli: &Cli) -> Result<SolverConfig, Failure> {
    if !(cli.sat_timeout.is_finite() && cli.sat_timeout > 0.0) {
        return Err(usage("--sat-timeout must be positive"));
    }
    let base = match &cli.solver {
        Some(p) => SolverConfig::external(p),
        None => SolverConfig::from_env(),
    };
    Ok(base.with_timeout(Duration::from_secs_f64(cli.sat_timeout)))
}

/// Reads an instance and drops ROL entries their programs do not rank.
fn load(path: &Path) -> Result<Instance, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let inst = parse_any(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(inst.preprocess())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| usage(format!("stdout: {e}")))
        }
    }
}

fn couple_order(inst: &Instance, spec: Option<&str>) -> Result<CoupleOrder, Failure> {
    let Some(spec) = spec else {
        return Ok(CoupleOrder::Instance);
    };
    if let Ok(seed) = spec.parse::<u64>() {
        return Ok(CoupleOrder::Shuffled(seed));
    }
    let text = fs::read_to_string(spec).map_err(|e| usage(format!("{spec}: {e}")))?;
    let mut order = Vec::new();
    for name in text.split_whitespace() {
        let d = inst
            .find_doctor(name)
            .ok_or_else(|| usage(format!("{spec}: unknown doctor {name}")))?;
        match inst.role(d) {
            smpc::model::Role::Couple { couple, .. } => order.push(couple),
            smpc::model::Role::Single(_) => {
                return Err(usage(format!("{spec}: {name} is not in a couple")))
            }
        }
    }
    Ok(CoupleOrder::Explicit(order))
}

fn da_caps(args: &DaArgs) -> DaCaps {
    DaCaps {
        max_proposals: args.da_cap,
        max_time: None,
    }
}

fn run_da(inst: &Instance, algo: DaAlgo, args: &DaArgs) -> Result<DaOutcome, Failure> {
    let caps = da_caps(args);
    Ok(match algo {
        DaAlgo::Kpr => da::run_kpr(inst, &caps)?,
        DaAlgo::Rp99 => {
            let order = couple_order(inst, args.couple_order.as_deref())?;
            da::run_rp99(inst, &order, &caps)?
        }
    })
}

fn print_set(inst: &Instance, set: &StableSet) -> String {
    let mut out = String::new();
    for (m, &rp) in set.matchings().iter().zip(set.rp_opt_flags()) {
        out.push_str(&write_matching(inst, m));
        out.push_str(if rp { "\trp_opt\n" } else { "\t-\n" });
    }
    out
}

fn summarize(set: &StableSet) {
    eprintln!(
        "{} stable matching(s), {} RP_opt, R_opt {}",
        set.len(),
        set.rp_opt_count(),
        if set.has_ropt() { "exists" } else { "absent" }
    );
}

fn run(cli: Cli) -> Result<(), Failure> {
    let sat = solver_config(&cli)?;
    match &cli.cmd {
        Cmd::Gen {
            n,
            couples_pct,
            single_rol_len,
            couple_rol_len,
            quota,
            out,
        } => {
            let cfg = GenConfig {
                n: *n,
                couples_pct: *couples_pct,
                single_rol_len: *single_rol_len,
                couple_rol_len: *couple_rol_len,
                quota: *quota,
                seed: cli.seed,
            };
            let inst = gen::generate(&cfg).map_err(usage)?;
            let text = match cli.format {
                Some(Format::Json) => write_json(&inst) + "\n",
                _ => write_text(&inst),
            };
            emit(out.as_deref(), &text)
        }
        Cmd::Encode { instance, out } => {
            let inst = load(instance)?;
            let (cnf, reg) = encode::encode(&inst).map_err(usage)?;
            emit(out.as_deref(), &encode::to_dimacs(&cnf, &reg, &inst))
        }
        Cmd::Solve { instance } => {
            let inst = load(instance)?;
            match algos::solve_one(&inst, &sat)? {
                Some(m) => emit(None, &(write_matching(&inst, &m) + "\n")),
                None => emit(None, "UNSATISFIABLE\n"),
            }
        }
        Cmd::Enumerate { instance, limit } => {
            let inst = load(instance)?;
            let set = algos::enumerate_all(&inst, *limit, &sat)?;
            emit(None, &print_set(&inst, &set))?;
            summarize(&set);
            match set.status() {
                EnumStatus::Partial(why) => Err(solver_failure(format!("enumeration incomplete: {why}"))),
                EnumStatus::LimitReached => {
                    eprintln!("stopped at the limit; RP_opt tags cover the listed matchings only");
                    Ok(())
                }
                EnumStatus::Complete => Ok(()),
            }
        }
        Cmd::Pareto {
            instance,
            matching,
            incremental,
        } => {
            let inst = load(instance)?;
            let start = match matching {
                Some(line) => parse_matching(&inst, line).map_err(usage)?,
                None => match algos::solve_one(&inst, &sat)? {
                    Some(m) => m,
                    None => return emit(None, "UNSATISFIABLE\n"),
                },
            };
            let mode = if *incremental {
                ParetoMode::Incremental
            } else {
                ParetoMode::Fresh
            };
            let imp = algos::pareto_improve(&inst, &start, &sat, mode)?;
            eprintln!("{} improving step(s), {} solver call(s)", imp.steps, imp.solves);
            emit(None, &(write_matching(&inst, &imp.matching) + "\n"))
        }
        Cmd::Da { instance, algo, da } => {
            let inst = load(instance)?;
            let out = run_da(&inst, *algo, da)?;
            eprintln!("{:?} after {} proposals", out.status, out.iterations);
            match out.matching {
                Some(m) => emit(None, &(write_matching(&inst, &m) + "\n")),
                None => emit(None, "FAILED\n"),
            }
        }
        Cmd::Oracle { instance } => {
            let inst = load(instance)?;
            let set = oracle::brute_force_stable_set(&inst).map_err(usage)?;
            emit(None, &print_set(&inst, &set))?;
            summarize(&set);
            Ok(())
        }
        Cmd::Bench {
            n,
            couples_pct,
            instances,
            no_da,
            out,
            da,
        } => {
            let grid: Vec<Cell> = n
                .iter()
                .flat_map(|&n| couples_pct.iter().map(move |&x| Cell { n, couples_pct: x }))
                .collect();
            let order = match da.couple_order.as_deref() {
                None => CoupleOrder::Instance,
                Some(s) => CoupleOrder::Shuffled(
                    s.parse()
                        .map_err(|_| usage("bench takes a numeric --couple-order seed"))?,
                ),
            };
            let opts = BatchOptions {
                instances_per_cell: *instances,
                base_seed: cli.seed,
                solver: sat,
                run_da: !no_da,
                da_caps: da_caps(da),
                couple_order: order,
                jobs: cli.jobs,
            };
            let report = bench::run_batch(&grid, &opts).map_err(|e| match e {
                bench::BenchError::Gen(_) | bench::BenchError::Pool(_) => usage(e),
                bench::BenchError::Algo { source, .. } => source.into(),
                bench::BenchError::Da { source, .. } => source.into(),
            })?;
            let text = match cli.format {
                Some(Format::Json) => report.to_json() + "\n",
                _ => report.to_csv(),
            };
            emit(out.as_deref(), &text)
        }
        Cmd::Graph { instance, da, out } => {
            let inst = load(instance)?;
            let set = algos::enumerate_all(&inst, None, &sat)?;
            if !set.is_complete() {
                return Err(solver_failure("enumeration incomplete"));
            }
            let graph = algos::build_pareto_graph(&set, &inst);
            let highlight = match da {
                Some(algo) => run_da(
                    &inst,
                    *algo,
                    &DaArgs {
                        couple_order: None,
                        da_cap: None,
                    },
                )?
                .matching
                .and_then(|m| set.position(&m)),
                None => None,
            };
            emit(out.as_deref(), &graph.to_dot(highlight))
        }
    }
}
