use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fairsched::eval::{evaluate_with, ExperimentOutput, Histogram, Method, ReplicationRow};
use fairsched::io::{instance_to_json, parse_assignment, parse_instance, parse_json, to_json, RunDocument, SolveDocument};
use fairsched::{
    generate_instance, mean_value_solve, run_experiment, sequential_solve, ExperimentConfig, GeneratorParams,
    SolverConfig,
};

const EXIT_INPUT: u8 = 2;
const EXIT_DRO_INFEASIBLE: u8 = 3;
const EXIT_BUDGET: u8 = 4;
const EXIT_QUOTA: u8 = 5;

/// Distributionally robust fair task assignment.
#[derive(Parser)]
#[command(name = "fairsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random box instance.
    Generate(GenerateArgs),
    /// Solve an instance with the robust or the mean-value model.
    Solve(SolveArgs),
    /// Estimate violation probability and spreads of an assignment.
    Evaluate(EvaluateArgs),
    /// Run replicated comparisons of both methods.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct InstanceParams {
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

impl InstanceParams {
    fn apply(&self, mut p: GeneratorParams) -> GeneratorParams {
        p.n_tasks = self.tasks.unwrap_or(p.n_tasks);
        p.n_workers = self.workers.unwrap_or(p.n_workers);
        p.delta = self.delta.unwrap_or(p.delta);
        p.epsilon = self.epsilon.unwrap_or(p.epsilon);
        p
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    params: InstanceParams,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dro,
    Mean,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Dro => Method::Dro,
            MethodArg::Mean => Method::Mean,
        }
    }
}

/// Solver flags; each one overrides the value from `--config`.
#[derive(Args)]
struct SolverFlags {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    big_m: Option<f64>,
    #[arg(long)]
    scaling_floor: Option<f64>,
    /// Build the polytope formulation even for box supports.
    #[arg(long)]
    force_generic: bool,
    #[arg(long)]
    max_nodes: Option<usize>,
}

impl SolverFlags {
    fn apply(&self, mut c: SolverConfig) -> SolverConfig {
        c.max_iters = self.max_iters.unwrap_or(c.max_iters);
        c.tol = self.tol.unwrap_or(c.tol);
        c.big_m = self.big_m.or(c.big_m);
        c.scaling_floor = self.scaling_floor.or(c.scaling_floor);
        c.force_generic_path |= self.force_generic;
        c.lp.max_nodes = self.max_nodes.unwrap_or(c.lp.max_nodes);
        c
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "dro")]
    method: MethodArg,
    #[command(flatten)]
    solver: SolverFlags,
    /// Run document supplying solver settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    instance: PathBuf,
    /// Solve output holding an `assignment` matrix.
    assignment: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-sample spreads; defaults to the report path with a
    /// `.spreads.csv` extension.
    #[arg(long)]
    spreads_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    params: InstanceParams,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Worker threads; FAIRSCHED_JOBS takes precedence.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
    /// 20 tasks, 5 workers, 500 replications of 10000 samples. Takes hours.
    #[arg(long)]
    full_scale: bool,
    #[arg(long, default_value = "experiment")]
    out_dir: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<u8> {
    let p = a.params.apply(GeneratorParams::default());
    let inst = generate_instance(a.seed, &p)?.validated()?;
    emit(a.output.as_deref(), &instance_to_json(&inst))?;
    let line = format!(
        "{} tasks x {} workers, delta {}, epsilon {}",
        inst.n_tasks, inst.n_workers, inst.delta, inst.epsilon
    );
    match &a.output {
        Some(p) => println!("wrote {}: {line}", p.display()),
        None => eprintln!("{line}"),
    }
    Ok(0)
}

fn solve(a: SolveArgs) -> Result<u8> {
    let inst = parse_instance(&read(&a.instance)?).with_context(|| format!("in {}", a.instance.display()))?;
    let base = match &a.config {
        Some(p) => {
            let run: RunDocument = parse_json(&read(p)?).with_context(|| format!("in {}", p.display()))?;
            run.solver
        }
        None => SolverConfig::default(),
    };
    let method = Method::from(a.method);
    let mut run = RunDocument::new(method, a.solver.apply(base));
    run.instance_path = Some(a.instance.display().to_string());
    run.output_path = a.output.as_ref().map(|p| p.display().to_string());

    let start = Instant::now();
    let doc = match method {
        Method::Dro => {
            let trace = sequential_solve(&inst, &run.solver)?;
            let last = trace.last().clone();
            SolveDocument {
                assignment: trace.final_assignment.to_matrix().to_rows(),
                reward: last.reward,
                g: last.g,
                v: last.v,
                converged: trace.converged,
                feasible_for_dro: trace.feasible_for_dro,
                trace: trace.iterations,
                final_scaling: Some(trace.final_scaling),
                wall_time_ms: 0.0,
                run,
            }
        }
        Method::Mean => {
            let sol = mean_value_solve(&inst, &run.solver)?;
            SolveDocument {
                assignment: sol.x.to_matrix().to_rows(),
                reward: sol.x.reward(&inst.rewards),
                g: sol.g,
                v: sol.v,
                converged: true,
                feasible_for_dro: false,
                trace: Vec::new(),
                final_scaling: None,
                wall_time_ms: 0.0,
                run,
            }
        }
    };
    let doc = SolveDocument {
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        ..doc
    };
    emit(a.output.as_deref(), &to_json(&doc))?;
    eprintln!(
        "{}: reward {:.4}, g {:.4}, v {:.3e}, {} iteration(s)",
        method.as_str(),
        doc.reward,
        doc.g,
        doc.v,
        doc.trace.len().max(1)
    );
    if method == Method::Dro && !doc.feasible_for_dro {
        eprintln!("robust constraint not met: terminal slack {:.3e}", doc.v);
        return Ok(EXIT_DRO_INFEASIBLE);
    }
    Ok(0)
}

fn spreads_path(a: &EvaluateArgs) -> Option<PathBuf> {
    a.spreads_csv
        .clone()
        .or_else(|| a.output.as_ref().map(|p| p.with_extension("spreads.csv")))
}

fn evaluate(a: EvaluateArgs) -> Result<u8> {
    let inst = parse_instance(&read(&a.instance)?).with_context(|| format!("in {}", a.instance.display()))?;
    let x = parse_assignment(&read(&a.assignment)?).with_context(|| format!("in {}", a.assignment.display()))?;
    if x.n_tasks() != inst.n_tasks || x.n_workers() != inst.n_workers {
        bail!(fairsched::Error::Dimension(format!(
            "assignment is {}x{}, instance is {}x{}",
            x.n_tasks(),
            x.n_workers(),
            inst.n_tasks,
            inst.n_workers
        )));
    }
    let csv = spreads_path(&a);
    let mut report = evaluate_with(&x, &inst, a.samples, a.seed, csv.is_some())?;
    if let Some(path) = &csv {
        let samples = report.spreads.samples.take().unwrap_or_default();
        let mut out = String::from("sample,spread\n");
        for (k, s) in samples.iter().enumerate() {
            writeln!(out, "{k},{s}").unwrap();
        }
        write(path, &out)?;
    }
    emit(a.output.as_deref(), &to_json(&report))?;
    eprintln!(
        "violation probability {:.4} over {} samples, reward {:.4}",
        report.violation_probability, report.n_samples, report.reward
    );
    Ok(0)
}

/// `FAIRSCHED_JOBS` wins over `--jobs` when it parses as a positive count.
fn jobs(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("FAIRSCHED_JOBS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => bail!(fairsched::Error::InvalidInput(format!(
                "FAIRSCHED_JOBS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(flag.filter(|&n| n > 0)),
    }
}

fn histogram_csv(out: &ExperimentOutput, pick: impl Fn(&fairsched::eval::MethodSummary) -> &Histogram) -> String {
    let mut s = String::from("method,bin_low,bin_high,count\n");
    for m in [&out.summary.dro, &out.summary.mean] {
        let h = pick(m);
        for (k, c) in h.counts.iter().enumerate() {
            writeln!(s, "{},{},{},{c}", m.method.as_str(), h.edges[k], h.edges[k + 1]).unwrap();
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn experiment(a: ExperimentArgs) -> Result<u8> {
    let (base, reps, samples) = if a.full_scale {
        (GeneratorParams::default(), 500, 10_000)
    } else {
        let desk = GeneratorParams {
            n_tasks: 12,
            n_workers: 3,
            ..Default::default()
        };
        (desk, 50, 2000)
    };
    let cfg = ExperimentConfig {
        generator: a.params.apply(base),
        solver: a.solver.apply(SolverConfig::default()),
        n_replications: a.replications.unwrap_or(reps),
        n_samples: a.samples.unwrap_or(samples),
        base_seed: a.seed,
        jobs: jobs(a.jobs)?,
        keep_first_spreads: true,
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let out = run_experiment(&cfg)?;
    let dir = &a.out_dir;

    let stored = ExperimentConfig { jobs: None, ..cfg.clone() };
    write(&dir.join("config.json"), &to_json(&stored))?;
    write(&dir.join("summary.json"), &to_json(&out.summary))?;

    let mut rows = format!("{}\n", ReplicationRow::CSV_HEADER);
    let mut times = String::from("replication,method,wall_time_ms\n");
    for r in &out.rows {
        writeln!(rows, "{}", r.to_csv()).unwrap();
        writeln!(times, "{},{},{:.3}", r.replication, r.method.as_str(), r.wall_time_ms).unwrap();
    }
    write(&dir.join("replications.csv"), &rows)?;
    write(&dir.join("timings.csv"), &times)?;

    let mut fails = String::from("replication,method,message\n");
    for f in &out.failures {
        writeln!(fails, "{},{},{}", f.replication, f.method.as_str(), csv_field(&f.message)).unwrap();
    }
    write(&dir.join("failures.csv"), &fails)?;

    let mut spreads = String::from("replication,method,sample,spread\n");
    for d in &out.spread_samples {
        for (k, s) in d.spreads.iter().enumerate() {
            writeln!(spreads, "{},{},{k},{s}", d.replication, d.method.as_str()).unwrap();
        }
    }
    write(&dir.join("spreads.csv"), &spreads)?;
    write(&dir.join("violation_histogram.csv"), &histogram_csv(&out, |m| &m.violation_histogram))?;
    write(&dir.join("reward_histogram.csv"), &histogram_csv(&out, |m| &m.reward_histogram))?;

    let s = &out.summary;
    println!(
        "{} of {} replications succeeded; violation dro {:.4} mean {:.4}; reward dro {:.2} mean {:.2}",
        s.n_replications - s.failures,
        s.n_replications,
        s.dro.mean_violation,
        s.mean.mean_violation,
        s.dro.mean_reward,
        s.mean.mean_reward
    );
    if s.success_rate() < 0.9 {
        eprintln!("fewer than 90% of replications succeeded");
        return Ok(EXIT_QUOTA);
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<fairsched::Error>() {
            return match e {
                e if e.is_budget() => EXIT_BUDGET,
                fairsched::Error::Solver { .. } | fairsched::Error::Model(_) => 1,
                _ => EXIT_INPUT,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_INPUT;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
