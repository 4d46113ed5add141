//! Batch experiments: generate markets over a grid, enumerate their stable
//! matchings, optionally run the DA heuristics, and aggregate per cell.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algos::{build_pareto_graph, enumerate_all, AlgoError, EnumStatus};
use crate::da::{run_kpr, run_rp99, CoupleOrder, DaCaps, DaError, DaStatus};
use crate::gen::{generate, GenConfig, GenError};
use crate::satio::SolverConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DaAlgo {
    Kpr,
    Rp99,
}

impl DaAlgo {
    pub const ALL: [DaAlgo; 2] = [DaAlgo::Kpr, DaAlgo::Rp99];

    pub fn name(self) -> &'static str {
        match self {
            DaAlgo::Kpr => "kpr",
            DaAlgo::Rp99 => "rp99",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub couples_pct: f64,
}

#[derive(Clone, Debug)]
pub struct BatchOptions {
    pub instances_per_cell: usize,
    /// Instance `i` of every cell uses seed `base_seed + i`.
    pub base_seed: u64,
    pub solver: SolverConfig,
    pub run_da: bool,
    pub da_caps: DaCaps,
    pub couple_order: CoupleOrder,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            instances_per_cell: 50,
            base_seed: 0,
            solver: SolverConfig::in_process(),
            run_da: true,
            da_caps: DaCaps::default(),
            couple_order: CoupleOrder::Instance,
            jobs: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("instance n={n} x={x} seed={seed}: {source}")]
    Algo {
        n: usize,
        x: f64,
        seed: u64,
        source: AlgoError,
    },
    #[error("instance n={n} x={x} seed={seed}: {source}")]
    Da {
        n: usize,
        x: f64,
        seed: u64,
        source: DaError,
    },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaRecord {
    pub algo: DaAlgo,
    pub status: DaStatus,
    /// Whether the matching found is RP_opt; `None` unless matched.
    pub found_rp_opt: Option<bool>,
    pub iterations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub n: usize,
    pub couples_pct: f64,
    pub seed: u64,
    pub enumeration: EnumStatus,
    pub stable_count: usize,
    pub rp_opt_count: usize,
    pub has_ropt: bool,
    /// Edges of the transitively reduced dominance graph.
    pub pareto_moves: usize,
    pub enumerate_secs: f64,
    pub da: Vec<DaRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaSummary {
    pub algo: DaAlgo,
    /// Among instances with more than one stable matching that the
    /// algorithm matched.
    pub frac_rp_opt_found_among_multi_solved: Option<f64>,
    /// Among instances with at least one stable matching.
    pub frac_timeouts: Option<f64>,
    pub multi_solved: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n: usize,
    pub couples_pct: f64,
    pub instances: usize,
    /// Instances whose enumeration finished.
    pub complete: usize,
    pub satisfiable: usize,
    pub frac_satisfiable: Option<f64>,
    pub frac_unique_among_sat: Option<f64>,
    pub frac_ropt_among_sat: Option<f64>,
    /// Stable-matching count → instances, over complete instances.
    pub histogram: BTreeMap<usize, usize>,
    /// Over satisfiable instances.
    pub mean_stable_count: Option<f64>,
    pub sd_stable_count: Option<f64>,
    /// Stable-matching count → RP_opt count → instances.
    pub rp_opt_counts_by_stable_count: BTreeMap<usize, BTreeMap<usize, usize>>,
    /// Stable-matching count → mean reduced dominance edges.
    pub mean_pareto_moves_by_stable_count: BTreeMap<usize, f64>,
    pub da: Vec<DaSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub cells: Vec<CellReport>,
    pub instances: Vec<InstanceRecord>,
}

fn frac(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn run_instance(cfg: &GenConfig, opts: &BatchOptions) -> Result<InstanceRecord, BenchError> {
    let inst = generate(cfg)?;
    let started = Instant::now();
    let set = enumerate_all(&inst, None, &opts.solver).map_err(|source| BenchError::Algo {
        n: cfg.n,
        x: cfg.couples_pct,
        seed: cfg.seed,
        source,
    })?;
    let enumerate_secs = started.elapsed().as_secs_f64();
    let pareto_moves = if set.is_complete() {
        build_pareto_graph(&set, &inst).edges.len()
    } else {
        0
    };
    let mut da = Vec::new();
    if opts.run_da {
        for algo in DaAlgo::ALL {
            let out = match algo {
                DaAlgo::Kpr => run_kpr(&inst, &opts.da_caps),
                DaAlgo::Rp99 => run_rp99(&inst, &opts.couple_order, &opts.da_caps),
            }
            .map_err(|source| BenchError::Da {
                n: cfg.n,
                x: cfg.couples_pct,
                seed: cfg.seed,
                source,
            })?;
            da.push(DaRecord {
                algo,
                status: out.status,
                found_rp_opt: out
                    .matching
                    .as_ref()
                    .filter(|_| set.is_complete())
                    .map(|m| set.is_rp_opt(m)),
                iterations: out.iterations,
            });
        }
    }
    Ok(InstanceRecord {
        n: cfg.n,
        couples_pct: cfg.couples_pct,
        seed: cfg.seed,
        enumeration: set.status().clone(),
        stable_count: set.len(),
        rp_opt_count: set.rp_opt_count(),
        has_ropt: set.has_ropt(),
        pareto_moves,
        enumerate_secs,
        da,
    })
}

pub fn run_batch(grid: &[Cell], opts: &BatchOptions) -> Result<BatchReport, BenchError> {
    let configs: Vec<GenConfig> = grid
        .iter()
        .flat_map(|c| {
            (0..opts.instances_per_cell)
                .map(move |i| GenConfig::new(c.n, c.couples_pct, opts.base_seed.wrapping_add(i as u64)))
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let work = || -> Result<Vec<InstanceRecord>, BenchError> {
        configs.par_iter().map(|c| run_instance(c, opts)).collect()
    };
    let records = if opts.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| BenchError::Pool(e.to_string()))?
            .install(work)?
    } else {
        work()?
    };
    let cells = grid
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let lo = k * opts.instances_per_cell;
            aggregate(*c, &records[lo..lo + opts.instances_per_cell])
        })
        .collect();
    Ok(BatchReport {
        cells,
        instances: records,
    })
}

pub fn aggregate(cell: Cell, records: &[InstanceRecord]) -> CellReport {
    let complete: Vec<&InstanceRecord> = records
        .iter()
        .filter(|r| r.enumeration == EnumStatus::Complete)
        .collect();
    let sat: Vec<&InstanceRecord> = complete.iter().copied().filter(|r| r.stable_count > 0).collect();
    let mut histogram = BTreeMap::new();
    let mut rp_by = BTreeMap::<usize, BTreeMap<usize, usize>>::new();
    let mut moves_by = BTreeMap::<usize, (usize, usize)>::new();
    for r in &complete {
        *histogram.entry(r.stable_count).or_insert(0) += 1;
        if r.stable_count > 0 {
            *rp_by
                .entry(r.stable_count)
                .or_default()
                .entry(r.rp_opt_count)
                .or_insert(0) += 1;
            let m = moves_by.entry(r.stable_count).or_insert((0, 0));
            m.0 += r.pareto_moves;
            m.1 += 1;
        }
    }
    let counts: Vec<f64> = sat.iter().map(|r| r.stable_count as f64).collect();
    let mean = (!counts.is_empty()).then(|| counts.iter().sum::<f64>() / counts.len() as f64);
    let sd = mean.map(|m| {
        (counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / counts.len() as f64).sqrt()
    });
    let da = DaAlgo::ALL
        .iter()
        .filter(|&&a| records.iter().any(|r| r.da.iter().any(|d| d.algo == a)))
        .map(|&algo| {
            let of = |r: &InstanceRecord| r.da.iter().find(|d| d.algo == algo).cloned();
            let solved_multi: Vec<DaRecord> = sat
                .iter()
                .filter(|r| r.stable_count > 1)
                .filter_map(|r| of(r))
                .filter(|d| d.status == DaStatus::Matched)
                .collect();
            let found = solved_multi
                .iter()
                .filter(|d| d.found_rp_opt == Some(true))
                .count();
            let failures = sat
                .iter()
                .filter_map(|r| of(r))
                .filter(|d| d.status != DaStatus::Matched)
                .count();
            DaSummary {
                algo,
                frac_rp_opt_found_among_multi_solved: frac(found, solved_multi.len()),
                frac_timeouts: frac(failures, sat.len()),
                multi_solved: solved_multi.len(),
                failures,
            }
        })
        .collect();
    CellReport {
        n: cell.n,
        couples_pct: cell.couples_pct,
        instances: records.len(),
        complete: complete.len(),
        satisfiable: sat.len(),
        frac_satisfiable: frac(sat.len(), complete.len()),
        frac_unique_among_sat: frac(sat.iter().filter(|r| r.stable_count == 1).count(), sat.len()),
        frac_ropt_among_sat: frac(sat.iter().filter(|r| r.has_ropt).count(), sat.len()),
        histogram,
        mean_stable_count: mean,
        sd_stable_count: sd,
        rp_opt_counts_by_stable_count: rp_by,
        mean_pareto_moves_by_stable_count: moves_by
            .into_iter()
            .map(|(k, (sum, n))| (k, sum as f64 / n as f64))
            .collect(),
        da,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl BatchReport {
    /// One row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,couples_pct,instances,complete,satisfiable,frac_satisfiable,\
             frac_unique_among_sat,frac_ropt_among_sat,mean_stable_count,sd_stable_count,\
             histogram,kpr_frac_rpopt_found,kpr_frac_timeouts,rp99_frac_rpopt_found,rp99_frac_timeouts\n",
        );
        for c in &self.cells {
            let hist: Vec<String> = c.histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            let da = |a: DaAlgo| c.da.iter().find(|d| d.algo == a);
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.n,
                c.couples_pct,
                c.instances,
                c.complete,
                c.satisfiable,
                opt(c.frac_satisfiable),
                opt(c.frac_unique_among_sat),
                opt(c.frac_ropt_among_sat),
                opt(c.mean_stable_count),
                opt(c.sd_stable_count),
                hist.join(";"),
            )
            .unwrap();
            for a in DaAlgo::ALL {
                let d = da(a);
                write!(
                    out,
                    ",{},{}",
                    opt(d.and_then(|d| d.frac_rp_opt_found_among_multi_solved)),
                    opt(d.and_then(|d| d.frac_timeouts))
                )
                .unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(k: usize) -> BatchOptions {
        BatchOptions {
            instances_per_cell: k,
            ..BatchOptions::default()
        }
    }

    #[test]
    fn tiny_singles_only_cell() {
        // Singles-only markets always have a stable matching; counts are
        // checked against the oracle.
        let report = run_batch(&[Cell { n: 5, couples_pct: 0.0 }], &opts(3)).unwrap();
        let c = &report.cells[0];
        assert_eq!(c.instances, 3);
        assert_eq!(c.satisfiable, 3);
        assert_eq!(c.frac_satisfiable, Some(1.0));
        for r in &report.instances {
            let inst = generate(&GenConfig::new(r.n, r.couples_pct, r.seed)).unwrap();
            let truth = crate::oracle::brute_force_stable_set(&inst).unwrap();
            assert_eq!(r.stable_count, truth.len());
            assert_eq!(r.rp_opt_count, truth.rp_opt_count());
            // Without couples DA reaches the resident-optimal matching.
            assert!(r.da.iter().all(|d| d.found_rp_opt == Some(true)));
        }
        assert_eq!(c.histogram.values().sum::<usize>(), 3);
    }

    #[test]
    fn report_is_reproducible_and_consistent() {
        let grid = [Cell { n: 20, couples_pct: 0.2 }];
        let a = run_batch(&grid, &opts(4)).unwrap();
        let mut o = opts(4);
        o.jobs = 1;
        let b = run_batch(&grid, &o).unwrap();
        let strip = |r: &BatchReport| {
            let mut r = r.clone();
            r.instances.iter_mut().for_each(|i| i.enumerate_secs = 0.0);
            r
        };
        assert_eq!(strip(&a), strip(&b));
        let c = &a.cells[0];
        assert!(c.frac_ropt_among_sat >= c.frac_unique_among_sat);
        assert_eq!(c.histogram.values().sum::<usize>(), c.complete);
        let csv = a.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(
            csv.lines().next().unwrap().split(',').count(),
            csv.lines().nth(1).unwrap().split(',').count()
        );
        let json: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(json["instances"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn aggregate_conventions() {
        let rec = |count: usize, rp: usize, da: Vec<DaRecord>| InstanceRecord {
            n: 1,
            couples_pct: 0.0,
            seed: 0,
            enumeration: EnumStatus::Complete,
            stable_count: count,
            rp_opt_count: rp,
            has_ropt: rp == 1,
            pareto_moves: count.saturating_sub(1),
            enumerate_secs: 0.0,
            da,
        };
        let d = |status, found| DaRecord {
            algo: DaAlgo::Kpr,
            status,
            found_rp_opt: found,
            iterations: 0,
        };
        let records = vec![
            rec(0, 0, vec![d(DaStatus::FailedCycle, None)]),
            rec(1, 1, vec![d(DaStatus::Matched, Some(true))]),
            rec(2, 1, vec![d(DaStatus::Matched, Some(false))]),
            rec(2, 2, vec![d(DaStatus::FailedTimeout, None)]),
        ];
        let c = aggregate(Cell { n: 1, couples_pct: 0.0 }, &records);
        assert_eq!(c.frac_satisfiable, Some(0.75));
        assert_eq!(c.frac_unique_among_sat, Some(1.0 / 3.0));
        assert_eq!(c.frac_ropt_among_sat, Some(2.0 / 3.0));
        assert_eq!(c.mean_stable_count, Some(5.0 / 3.0));
        let kpr = &c.da[0];
        // Only the matched multi-matching instance counts, and it missed.
        assert_eq!(kpr.multi_solved, 1);
        assert_eq!(kpr.frac_rp_opt_found_among_multi_solved, Some(0.0));
        // The unsatisfiable instance is not a failure.
        assert_eq!(kpr.failures, 1);
        assert_eq!(kpr.frac_timeouts, Some(1.0 / 3.0));
        assert_eq!(c.rp_opt_counts_by_stable_count[&2][&1], 1);
        assert_eq!(c.rp_opt_counts_by_stable_count[&2][&2], 1);
    }
}
