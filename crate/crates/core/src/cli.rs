//! The `apr-lab` command line.
//!
//! Every subcommand writes its outputs and a `config.json` snapshot under
//! `--out`; `apr-lab replay <config.json>` reruns the snapshot and reproduces
//! the outputs byte for byte.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 protocol error from the runtime.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, render_answer};
use crate::corpus::{self, CorpusError};
use crate::countdown::{read_tasks, sample_tasks, write_tasks, Task, TaskError};
use crate::external::{ExternalPolicy, HttpTransport};
use crate::metrics::{self, CurveGrid, EvalConfig, EvalReport, EvalRow, MetricsError, OutcomeMatrix};
use crate::runtime::{Runtime, WorkerPool};
use crate::search::{derive_seed, ExpansionConfig, UNBOUNDED_BEAM};
use crate::solvers::{BudgetConfig, Method, SolveOutcome, SymbolicPolicy, MAX_CHILD_THREADS};
use crate::tune::{self, PolicyParams, TuneError, TunerConfig};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Protocol(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Protocol(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::Io(_) | TaskError::Parse { .. } => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Task(t) => t.into(),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Empty | MetricsError::NoSamples(_) => CliError::Usage(e.to_string()),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::Io(_) | TuneError::Csv(_) => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "apr-lab", version, about = "Countdown search with spawn/join parallel reasoning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Sample solvable tasks into tasks.jsonl.
    GenTasks(GenTasksArgs),
    /// Run one solver on a task file; writes outcomes.jsonl and traces.jsonl.
    Solve(SolveArgs),
    /// Evaluate solvers; writes per-run rows, summary, pass@n/cons@n and curves.
    Eval(EvalArgs),
    /// Generate a demonstration corpus and its rejection-filtered subset.
    GenData(GenDataArgs),
    /// Sweep one solver knob over a grid of context caps.
    Sweep(SweepArgs),
    /// Tune the APR policy parameters with group-relative rollouts.
    Tune(TuneArgs),
    /// Rerun a config.json snapshot.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Experiment seed.
    #[arg(long, env = "APR_LAB_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolverArgs {
    /// sos+ or apr.
    #[arg(long, default_value = "apr")]
    pub method: Method,
    /// Beam width; 0 keeps every successor.
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long = "promising-p", default_value_t = 0.1)]
    pub promising_p: f64,
    /// Maximum child threads (0-10).
    #[arg(long, default_value_t = MAX_CHILD_THREADS, value_parser = clap::value_parser!(u64).range(0..=10).map(|v| v as usize))]
    pub children: usize,
    /// Spawn exactly this many children where the search allows (0-10).
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=10).map(|v| v as usize))]
    pub enforce: Option<usize>,
    /// Per-thread context cap in tokens.
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub cap: usize,
    /// Added to the beam width at spawn sites.
    #[arg(long = "spawn-width-bias", default_value_t = 0.0, allow_negative_numbers = true)]
    pub spawn_width_bias: f64,
}

impl SolverArgs {
    fn check(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.promising_p) {
            return Err(CliError::Usage(format!("--promising-p must be in [0, 1], got {}", self.promising_p)));
        }
        if !self.spawn_width_bias.is_finite() {
            return Err(CliError::Usage("--spawn-width-bias must be finite".into()));
        }
        Ok(())
    }

    pub fn policy(&self) -> SymbolicPolicy {
        let beam = if self.beam == 0 { UNBOUNDED_BEAM } else { self.beam };
        let cfg = ExpansionConfig::default().with_beam(beam).with_promising(self.promising_p);
        let policy = match self.method {
            Method::SosPlus => SymbolicPolicy::sos_plus(cfg),
            Method::Apr => SymbolicPolicy::apr(cfg),
        };
        policy.with_spawn_width_bias(self.spawn_width_bias)
    }

    pub fn budget(&self) -> BudgetConfig {
        BudgetConfig::default().with_cap(self.cap).with_children(self.children).with_enforced_children(self.enforce)
    }

    fn label(&self) -> String {
        let mut label = format!("beam={},p={},cap={}", self.beam, self.promising_p, self.cap);
        if self.method == Method::Apr {
            match self.enforce {
                Some(n) => label.push_str(&format!(",enforce={n}")),
                None => label.push_str(&format!(",children={}", self.children)),
            }
            if self.spawn_width_bias != 0.0 {
                label.push_str(&format!(",bias={}", self.spawn_width_bias));
            }
        }
        label
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenTasksArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub n: usize,
    /// Numbers per task (4 standard, 5 extended).
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..=5).map(|v| v as usize))]
    pub inputs: usize,
    #[arg(long = "max-target", default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_target: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    /// Task file (JSON lines with inputs and target).
    #[arg(long)]
    pub tasks: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Drive the runtime from this completion endpoint instead of the symbolic solver.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PoolArgs {
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub workers: usize,
    /// Milliseconds per generated token.
    #[arg(long = "token-ms", default_value_t = 3)]
    pub token_ms: u64,
    /// Milliseconds charged per spawn.
    #[arg(long = "spawn-ms", default_value_t = 50)]
    pub spawn_ms: u64,
}

impl PoolArgs {
    pub fn pool(&self) -> WorkerPool {
        WorkerPool::new(self.workers, Duration::from_millis(self.token_ms), Duration::from_millis(self.spawn_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    /// Methods to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "sos+,apr")]
    pub methods: Vec<Method>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Samples per task for pass@n and cons@n.
    #[arg(long = "cons-n", default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub cons_n: usize,
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub n: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(2..=5).map(|v| v as usize))]
    pub inputs: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Enforced child-thread count.
    Children,
    PromisingP,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long, value_enum, default_value = "children")]
    pub axis: SweepAxis,
    /// Inclusive integer range `a..b` or a comma separated list.
    #[arg(long, default_value = "0..10")]
    pub values: String,
    /// Context caps, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1024,2048,3072,4096")]
    pub caps: Vec<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TuneArgs {
    /// Training tasks; sampled from the seed when absent.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Validation tasks; sampled from the seed when absent.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long = "train-n", default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub train_n: usize,
    #[arg(long = "validation-n", default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub validation_n: usize,
    #[arg(long, default_value_t = 150)]
    pub steps: usize,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..).map(|v| v as usize))]
    pub group: usize,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub batch: usize,
    #[arg(long = "eval-every", default_value_t = 25)]
    pub eval_every: usize,
    #[arg(long = "clip-ratio", default_value_t = 0.2)]
    pub clip_ratio: f64,
    #[arg(long = "init-p", default_value_t = 0.01)]
    pub init_p: f64,
    #[arg(long = "init-beam", default_value_t = 5)]
    pub init_beam: usize,
    #[arg(long = "init-children", default_value_t = MAX_CHILD_THREADS)]
    pub init_children: usize,
    #[arg(long = "init-bias", default_value_t = 0.0, allow_negative_numbers = true)]
    pub init_bias: f64,
    /// Also tune the beam width.
    #[arg(long = "tune-beam")]
    pub tune_beam: bool,
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=10).map(|v| v as usize))]
    pub enforce: Option<usize>,
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    pub cap: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A config.json written by an earlier run.
    pub config: PathBuf,
    /// Write into this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    version: String,
    #[serde(flatten)]
    command: Command,
}

impl Command {
    fn common_mut(&mut self) -> Option<&mut Common> {
        match self {
            Command::GenTasks(a) => Some(&mut a.common),
            Command::Solve(a) => Some(&mut a.common),
            Command::Eval(a) => Some(&mut a.common),
            Command::GenData(a) => Some(&mut a.common),
            Command::Sweep(a) => Some(&mut a.common),
            Command::Tune(a) => Some(&mut a.common),
            Command::Replay(_) => None,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            CliError::Usage(String::new())
        }
        _ => CliError::Usage(e.to_string()),
    })?;
    execute(cli.command)
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let help = std::env::args().any(|a| a == "--help" || a == "-h" || a == "--version" || a == "-V");
    match run_from(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) if help && msg.is_empty() => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            if !msg.is_empty() {
                eprintln!("apr-lab: {}", msg.trim_end());
            }
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    if let Command::Replay(args) = command {
        let text = fs::read_to_string(&args.config)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", args.config.display())))?;
        let snapshot: Snapshot =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad snapshot: {e}")))?;
        let mut command = snapshot.command;
        if let (Some(out), Some(common)) = (args.out, command.common_mut()) {
            common.out = out;
        }
        return execute(command);
    }
    let out = command.clone().common_mut().map(|c| c.out.clone()).unwrap_or_default();
    fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    write_snapshot(&out, &command)?;
    match command {
        Command::GenTasks(a) => gen_tasks(&a),
        Command::Solve(a) => solve(&a),
        Command::Eval(a) => eval(&a),
        Command::GenData(a) => gen_data(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Tune(a) => tune_cmd(&a),
        Command::Replay(_) => unreachable!("handled above"),
    }
}

fn write_snapshot(out: &Path, command: &Command) -> Result<(), CliError> {
    let snapshot = Snapshot { version: env!("CARGO_PKG_VERSION").to_string(), command: command.clone() };
    let mut file = BufWriter::new(File::create(out.join(CONFIG_FILE))?);
    serde_json::to_writer_pretty(&mut file, &snapshot)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

fn load_tasks(path: &Path) -> Result<Vec<Task>, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("task file {} does not exist", path.display())));
    }
    let tasks = read_tasks(path)?;
    if tasks.is_empty() {
        return Err(CliError::Usage(format!("task file {} is empty", path.display())));
    }
    Ok(tasks)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn gen_tasks(a: &GenTasksArgs) -> Result<(), CliError> {
    let tasks = sample_tasks(a.n, a.inputs, a.max_target, a.common.seed)?;
    write_tasks(&a.common.out.join("tasks.jsonl"), &tasks)?;
    Ok(())
}

#[derive(Serialize)]
struct OutcomeLine<'a> {
    task: usize,
    inputs: &'a [u64],
    target: u64,
    status: &'static str,
    solution: Option<String>,
    answer: String,
    total_tokens: usize,
    sequential_tokens: usize,
    child_count: usize,
    latency_ns: u64,
    protocol_errors: Vec<String>,
}

#[derive(Serialize)]
struct TraceLine {
    task: usize,
    threads: Vec<codec::ThreadText>,
}

fn solve(a: &SolveArgs) -> Result<(), CliError> {
    a.solver.check()?;
    let tasks = load_tasks(&a.tasks)?;
    let runtime = Runtime::default();
    let budget = a.solver.budget();
    let outcomes: Vec<SolveOutcome> = match &a.endpoint {
        Some(url) => {
            let policy = ExternalPolicy::new(HttpTransport::new(url.clone()));
            tasks.iter().map(|t| SolveOutcome::from_trace(t, runtime.run(&policy, t, &budget))).collect()
        }
        None => tasks
            .par_iter()
            .enumerate()
            .map(|(i, task)| {
                let mut policy = a.solver.policy();
                policy.cfg.rng_seed = derive_seed(a.common.seed, i as u64);
                policy.solve(task, &budget, &runtime)
            })
            .collect(),
    };
    let mut traces = Vec::with_capacity(outcomes.len());
    let mut lines = Vec::with_capacity(outcomes.len());
    let mut protocol_errors = 0;
    for (i, (task, outcome)) in tasks.iter().zip(&outcomes).enumerate() {
        let text = codec::encode(&outcome.trace).map_err(|e| CliError::Protocol(format!("task {i}: {e}")))?;
        traces.push(TraceLine { task: i, threads: text.threads });
        let row = EvalRow::from_outcome(i, "", "", outcome, &runtime.pool);
        protocol_errors += outcome.trace.errors.len();
        lines.push(OutcomeLine {
            task: i,
            inputs: &task.inputs,
            target: task.target,
            status: outcome.status.as_str(),
            solution: outcome.solution.as_ref().map(|s| s.canonical()),
            answer: render_answer(task, outcome.solution.as_ref()),
            total_tokens: row.total_tokens,
            sequential_tokens: row.sequential_tokens,
            child_count: row.child_count,
            latency_ns: row.latency_ns,
            protocol_errors: outcome.trace.errors.iter().map(|e| e.to_string()).collect(),
        });
    }
    write_jsonl(&a.common.out.join("outcomes.jsonl"), &lines)?;
    write_jsonl(&a.common.out.join("traces.jsonl"), &traces)?;
    let solved = outcomes.iter().filter(|o| o.solved()).count();
    println!("solved {solved}/{} tasks", tasks.len());
    if protocol_errors > 0 {
        return Err(CliError::Protocol(format!("{protocol_errors} protocol errors; see outcomes.jsonl")));
    }
    Ok(())
}

#[derive(Serialize)]
struct PassConsRow<'a> {
    method: String,
    config: &'a str,
    n: usize,
    pass_at_n: f64,
    cons_at_n: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<(), CliError> {
    a.solver.check()?;
    let tasks = load_tasks(&a.tasks)?;
    let runtime = Runtime::new(a.pool.pool());
    let configs: Vec<EvalConfig> = a
        .methods
        .iter()
        .map(|&method| {
            let solver = SolverArgs { method, ..a.solver.clone() };
            EvalConfig { label: solver.label(), policy: solver.policy(), budget: solver.budget() }
        })
        .collect();
    let report = EvalReport::evaluate(&tasks, &configs, &runtime, a.common.seed)?;
    let out = &a.common.out;
    report.write_jsonl(&out.join("report.jsonl"))?;
    write_csv(&out.join("summary.csv"), report.aggregates())?;
    metrics::compute_curves(&report, &CurveGrid::default(), out)?;

    let mut rows = Vec::new();
    for config in &configs {
        let matrix = OutcomeMatrix::sample(&tasks, &config.policy, &config.budget, &runtime, a.cons_n, a.common.seed)?;
        for n in 1..=a.cons_n {
            rows.push(PassConsRow {
                method: config.policy.method.to_string(),
                config: &config.label,
                n,
                pass_at_n: matrix.pass_at_n(n),
                cons_at_n: matrix.cons_at_n(n),
            });
        }
    }
    write_csv(&out.join("pass_cons.csv"), &rows)?;
    for agg in report.aggregates() {
        println!("{} [{}]: accuracy {:.3}", agg.method, agg.config, agg.accuracy);
    }
    Ok(())
}

fn gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    a.solver.check()?;
    let records = corpus::generate_corpus(a.n, a.inputs, &a.solver.policy(), &a.solver.budget(), a.common.seed)?;
    let kept = corpus::rejection_filter(&records)?;
    corpus::write_corpus(&a.common.out.join("corpus.jsonl"), &records)?;
    corpus::write_corpus(&a.common.out.join("corpus_filtered.jsonl"), &kept)?;
    println!("{} records, {} kept by the rejection filter", records.len(), kept.len());
    Ok(())
}

/// Parses `a..b` (inclusive) or `x,y,z`.
pub fn parse_values(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("bad --values {spec:?}; use a..b or a comma separated list"));
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: i64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: i64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).map(|v| v as f64).collect());
    }
    let values: Vec<f64> = spec.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

#[derive(Serialize)]
struct SweepRow<'a> {
    cap: usize,
    axis: &'a str,
    value: f64,
    accuracy: f64,
    n_tasks: usize,
    mean_total_tokens: f64,
    mean_sequential_tokens: f64,
    mean_child_count: f64,
    mean_latency_ms: f64,
}

fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    a.solver.check()?;
    let values = parse_values(&a.values)?;
    if a.caps.is_empty() || a.caps.contains(&0) {
        return Err(CliError::Usage("--caps needs positive values".into()));
    }
    let tasks = load_tasks(&a.tasks)?;
    let runtime = Runtime::new(a.pool.pool());
    let (axis, mut configs) = (format!("{:?}", a.axis).to_lowercase(), Vec::new());
    for &cap in &a.caps {
        for &value in &values {
            let mut solver = SolverArgs { cap, ..a.solver.clone() };
            match a.axis {
                SweepAxis::Children => {
                    if !(0.0..=MAX_CHILD_THREADS as f64).contains(&value) || value.fract() != 0.0 {
                        return Err(CliError::Usage(format!("child count {value} outside 0..10")));
                    }
                    solver.enforce = Some(value as usize);
                }
                SweepAxis::PromisingP => {
                    if !(0.0..=1.0).contains(&value) {
                        return Err(CliError::Usage(format!("promising p {value} outside [0, 1]")));
                    }
                    solver.promising_p = value;
                }
                SweepAxis::Beam => {
                    if value < 0.0 || value.fract() != 0.0 {
                        return Err(CliError::Usage(format!("beam {value} is not a nonnegative integer")));
                    }
                    solver.beam = value as usize;
                }
            }
            configs.push((
                cap,
                value,
                EvalConfig { label: solver.label(), policy: solver.policy(), budget: solver.budget() },
            ));
        }
    }
    let eval_configs: Vec<EvalConfig> = configs.iter().map(|c| c.2.clone()).collect();
    let report = EvalReport::evaluate(&tasks, &eval_configs, &runtime, a.common.seed)?;
    let aggregates = report.aggregates();
    let rows: Vec<SweepRow> = configs
        .iter()
        .map(|(cap, value, config)| {
            let agg = aggregates.iter().find(|g| g.config == config.label).expect("every config was evaluated");
            SweepRow {
                cap: *cap,
                axis: &axis,
                value: *value,
                accuracy: agg.accuracy,
                n_tasks: agg.n_tasks,
                mean_total_tokens: agg.mean_total_tokens,
                mean_sequential_tokens: agg.mean_sequential_tokens,
                mean_child_count: agg.mean_child_count,
                mean_latency_ms: agg.mean_latency_ms,
            }
        })
        .collect();
    let out = &a.common.out;
    write_csv(&out.join("sweep.csv"), &rows)?;
    report.write_jsonl(&out.join("report.jsonl"))?;
    metrics::compute_curves(&report, &CurveGrid::default(), out)?;
    println!("{} sweep rows", rows.len());
    Ok(())
}

fn tune_cmd(a: &TuneArgs) -> Result<(), CliError> {
    let seed = a.common.seed;
    let train = match &a.tasks {
        Some(path) => load_tasks(path)?,
        None => sample_tasks(a.train_n, 4, 100, derive_seed(seed, 1))?,
    };
    let validation = match &a.validation {
        Some(path) => load_tasks(path)?,
        None => sample_tasks(a.validation_n, 4, 100, derive_seed(seed, 2))?,
    };
    let mask = tune::ParamMask { beam_k: a.tune_beam, ..Default::default() };
    let cfg = TunerConfig {
        clip_ratio: a.clip_ratio,
        steps: a.steps,
        eval_every: a.eval_every,
        batch_tasks: a.batch,
        group_size: a.group,
        mask,
        budget: BudgetConfig::default().with_cap(a.cap).with_enforced_children(a.enforce),
        ..Default::default()
    };
    let initial = PolicyParams {
        promising_p: a.init_p,
        beam_k: a.init_beam,
        max_child_threads: a.init_children,
        spawn_width_bias: a.init_bias,
    };
    let result = tune::tune(initial, &train, &validation, &cfg, seed)?;
    let out = &a.common.out;
    result.write_curve_csv(&out.join("learning_curve.csv"))?;
    tune::write_params(&out.join("params.json"), &result.params)?;
    let mut file = BufWriter::new(File::create(out.join("tune.json"))?);
    serde_json::to_writer_pretty(&mut file, &result)?;
    file.write_all(b"\n")?;
    file.flush()?;
    println!(
        "validation accuracy {:.3} -> {:.3}; promising_p {:.3} -> {:.3}",
        result.initial_validation.accuracy,
        result.final_accuracy(),
        result.initial.promising_p,
        result.params.promising_p
    );
    if let Some(stop) = &result.early_stop {
        println!("stopped early at step {}: {}", stop.step, stop.reason);
    }
    Ok(())
}
