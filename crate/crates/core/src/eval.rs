//! Monte Carlo evaluation of assignments and the replicated experiment that
//! compares the robust method with the mean-value baseline.
//!
//! Service times are drawn uniformly on the support box. A sample violates
//! fairness when its spread `max_j T_j - min_j T_j` strictly exceeds `delta`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{generate_instance, spread_of, Assignment, GeneratorParams, Instance, SupportSet};
use crate::solver::{mean_value_solve, sequential_solve, SolverConfig};

/// Quantile levels reported in every [`SpreadSummary`].
pub const SPREAD_QUANTILES: [f64; 5] = [0.5, 0.9, 0.95, 0.99, 1.0];

/// Bins per histogram in an [`ExperimentSummary`].
pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadSummary {
    pub mean: f64,
    pub max: f64,
    /// `(level, value)` pairs at [`SPREAD_QUANTILES`], nearest-rank.
    pub quantiles: Vec<(f64, f64)>,
    /// Every sampled spread in draw order, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_samples: usize,
    pub violations: usize,
    /// `violations / n_samples`.
    pub violation_probability: f64,
    pub spreads: SpreadSummary,
    pub reward: f64,
    pub worker_time_means: Vec<f64>,
    /// False when the box is not centered on `mu`, so the sampling
    /// distribution does not have the mean the robust model assumed.
    pub sampling_mean_matches_mu: bool,
}

/// Evaluates `x` on `n_samples` uniform draws from the support box.
pub fn evaluate(x: &Assignment, inst: &Instance, n_samples: usize, seed: u64) -> Result<EvaluationReport> {
    evaluate_with(x, inst, n_samples, seed, false)
}

/// As [`evaluate`], optionally keeping every spread sample.
pub fn evaluate_with(
    x: &Assignment,
    inst: &Instance,
    n_samples: usize,
    seed: u64,
    keep_samples: bool,
) -> Result<EvaluationReport> {
    x.check_dims(inst)?;
    let (l, u) = match &inst.support {
        SupportSet::Box { l, u } => (l, u),
        SupportSet::Polytope { .. } => {
            return Err(Error::Unsupported(
                "evaluation samples uniformly on a box; polytope supports have no sampler".into(),
            ))
        }
    };
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi = vec![0.0; inst.n_tasks];
    let mut spreads = Vec::with_capacity(n_samples);
    let mut load_sums = vec![0.0; inst.n_workers];
    let mut violations = 0;
    for _ in 0..n_samples {
        for (v, (lo, hi)) in xi.iter_mut().zip(l.iter().zip(u)) {
            *v = lo + (hi - lo) * rng.random::<f64>();
        }
        let loads = x.worker_loads(&xi);
        for (acc, t) in load_sums.iter_mut().zip(&loads) {
            *acc += t;
        }
        let s = spread_of(&loads);
        if s > inst.delta {
            violations += 1;
        }
        spreads.push(s);
    }
    let n = n_samples as f64;
    let mean = spreads.iter().sum::<f64>() / n;
    let mut sorted = spreads.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = SPREAD_QUANTILES
        .iter()
        .map(|&p| (p, nearest_rank(&sorted, p)))
        .collect();
    let centered = l
        .iter()
        .zip(u)
        .zip(&inst.mu)
        .all(|((lo, hi), m)| (0.5 * (lo + hi) - m).abs() <= 1e-9 * (1.0 + m.abs()));
    Ok(EvaluationReport {
        n_samples,
        violations,
        violation_probability: violations as f64 / n,
        spreads: SpreadSummary {
            mean,
            max: *sorted.last().expect("n_samples > 0"),
            quantiles,
            samples: keep_samples.then_some(spreads),
        },
        reward: x.reward(&inst.rewards),
        worker_time_means: load_sums.into_iter().map(|s| s / n).collect(),
        sampling_mean_matches_mu: centered,
    })
}

fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dro,
    Mean,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dro => "dro",
            Self::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GeneratorParams,
    pub solver: SolverConfig,
    pub n_replications: usize,
    pub n_samples: usize,
    pub base_seed: u64,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Keep the spread samples of the first successful replication.
    #[serde(default)]
    pub keep_first_spreads: bool,
}

/// Instance seed of replication `r`.
pub fn instance_seed(base_seed: u64, r: usize) -> u64 {
    base_seed ^ r as u64
}

/// Sampling seed of replication `r`, shared by both methods and disjoint
/// from the instance seeds for fewer than `2^40` replications.
pub fn evaluation_seed(base_seed: u64, r: usize) -> u64 {
    base_seed ^ ((1u64 << 40) | r as u64)
}

/// One method on one replication; the columns of the per-replication CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub method: Method,
    pub reward: f64,
    pub violation_probability: f64,
    pub g_terminal: f64,
    pub v_terminal: f64,
    pub iterations: usize,
    pub wall_time_ms: f64,
}

impl ReplicationRow {
    /// Columns of [`to_csv`](Self::to_csv). Wall time is left out so that
    /// reruns with the same seed produce identical files.
    pub const CSV_HEADER: &'static str =
        "replication,method,reward,violation_probability,g_terminal,v_terminal,iterations";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.replication,
            self.method.as_str(),
            self.reward,
            self.violation_probability,
            self.g_terminal,
            self.v_terminal,
            self.iterations
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub method: Method,
    pub message: String,
}

/// Uniform bins; `edges` has one more entry than `counts`. The last bin is
/// closed on the right, values outside the range go to the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize, values: impl IntoIterator<Item = f64>) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|b| lo + width * b as f64).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let b = if width > 0.0 { ((v - lo) / width).floor() } else { 0.0 };
            counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub n_replications: usize,
    pub mean_violation: f64,
    pub violation_histogram: Histogram,
    pub mean_reward: f64,
    pub reward_histogram: Histogram,
    /// Runs whose terminal `v` is zero; always all of them for `mean`
    /// when its fairness band is attainable.
    pub n_feasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub n_replications: usize,
    pub n_samples: usize,
    pub base_seed: u64,
    /// Replications where either method failed; excluded from both summaries.
    pub failures: usize,
    /// Upper edge of the reward histograms: `n_tasks * reward_range.1`.
    pub reward_upper: f64,
    pub dro: MethodSummary,
    pub mean: MethodSummary,
}

impl ExperimentSummary {
    pub fn success_rate(&self) -> f64 {
        if self.n_replications == 0 {
            return 1.0;
        }
        1.0 - self.failures as f64 / self.n_replications as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadDump {
    pub replication: usize,
    pub method: Method,
    pub spreads: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    /// Replication-major, `dro` before `mean`; only successful replications.
    pub rows: Vec<ReplicationRow>,
    pub failures: Vec<ReplicationFailure>,
    pub spread_samples: Vec<SpreadDump>,
}

struct Outcome {
    row: ReplicationRow,
    feasible: bool,
    spreads: Option<Vec<f64>>,
}

fn run_method(
    method: Method,
    r: usize,
    inst: &Instance,
    cfg: &ExperimentConfig,
    keep: bool,
) -> Result<Outcome> {
    let start = Instant::now();
    let (x, g, v, iterations, feasible) = match method {
        Method::Dro => {
            let trace = sequential_solve(inst, &cfg.solver)?;
            let last = trace.last();
            let (g, v, n) = (last.g, last.v, trace.iterations.len());
            (trace.final_assignment, g, v, n, trace.feasible_for_dro)
        }
        Method::Mean => {
            let sol = mean_value_solve(inst, &cfg.solver)?;
            let feasible = sol.v <= cfg.solver.lp.int_tol;
            (sol.x, sol.g, sol.v, 1, feasible)
        }
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let report = evaluate_with(&x, inst, cfg.n_samples, evaluation_seed(cfg.base_seed, r), keep)?;
    Ok(Outcome {
        row: ReplicationRow {
            replication: r,
            method,
            reward: report.reward,
            violation_probability: report.violation_probability,
            g_terminal: g,
            v_terminal: v,
            iterations,
            wall_time_ms,
        },
        feasible,
        spreads: report.spreads.samples,
    })
}

type ReplicationResult = (usize, Vec<std::result::Result<Outcome, ReplicationFailure>>);

fn run_replication(r: usize, cfg: &ExperimentConfig) -> ReplicationResult {
    let fail = |method, e: Error| ReplicationFailure {
        replication: r,
        method,
        message: e.to_string(),
    };
    let inst = match generate_instance(instance_seed(cfg.base_seed, r), &cfg.generator) {
        Ok(inst) => inst,
        Err(e) => return (r, vec![Err(fail(Method::Dro, e.clone())), Err(fail(Method::Mean, e))]),
    };
    let keep = cfg.keep_first_spreads;
    let results = [Method::Dro, Method::Mean]
        .into_iter()
        .map(|m| run_method(m, r, &inst, cfg, keep).map_err(|e| fail(m, e)))
        .collect();
    (r, results)
}

/// Runs every replication and folds the results in replication order, so the
/// output apart from wall times does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    if !(cfg.generator.reward_range.1 > 0.0) {
        return Err(Error::InvalidInput("reward_range upper bound must be positive".into()));
    }
    let work = || -> Vec<ReplicationResult> {
        (0..cfg.n_replications)
            .into_par_iter()
            .map(|r| run_replication(r, cfg))
            .collect()
    };
    let results = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut spread_samples = Vec::new();
    let mut feasible = [0usize; 2];
    let mut failed_reps = 0;
    for (r, outcomes) in results {
        if outcomes.iter().any(|o| o.is_err()) {
            failed_reps += 1;
            failures.extend(outcomes.into_iter().filter_map(|o| o.err()));
            continue;
        }
        let first = spread_samples.is_empty();
        for (k, o) in outcomes.into_iter().flatten().enumerate() {
            feasible[k] += usize::from(o.feasible);
            if let (true, Some(spreads)) = (first, o.spreads) {
                spread_samples.push(SpreadDump {
                    replication: r,
                    method: o.row.method,
                    spreads,
                });
            }
            rows.push(o.row);
        }
    }

    let reward_upper = cfg.generator.n_tasks as f64 * cfg.generator.reward_range.1;
    let summarize = |method: Method, n_feasible: usize| {
        let mine: Vec<&ReplicationRow> = rows.iter().filter(|r| r.method == method).collect();
        let n = mine.len();
        let mean = |f: fn(&ReplicationRow) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                mine.iter().map(|r| f(r)).sum::<f64>() / n as f64
            }
        };
        MethodSummary {
            method,
            n_replications: n,
            mean_violation: mean(|r| r.violation_probability),
            violation_histogram: Histogram::new(
                0.0,
                1.0,
                HISTOGRAM_BINS,
                mine.iter().map(|r| r.violation_probability),
            ),
            mean_reward: mean(|r| r.reward),
            reward_histogram: Histogram::new(
                0.0,
                reward_upper,
                HISTOGRAM_BINS,
                mine.iter().map(|r| r.reward),
            ),
            n_feasible,
        }
    };
    let summary = ExperimentSummary {
        n_replications: cfg.n_replications,
        n_samples: cfg.n_samples,
        base_seed: cfg.base_seed,
        failures: failed_reps,
        reward_upper,
        dro: summarize(Method::Dro, feasible[0]),
        mean: summarize(Method::Mean, feasible[1]),
    };
    Ok(ExperimentOutput {
        summary,
        rows,
        failures,
        spread_samples,
    })
}
