//! Accuracy, pass@n, cons@n, token and latency curves.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::countdown::{validate_solution, Solution, Task};
use crate::runtime::{Runtime, WorkerPool};
use crate::search::derive_seed;
use crate::solvers::{BudgetConfig, SolveOutcome, SymbolicPolicy};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no tasks to evaluate")]
    Empty,
    #[error("task {0} has no samples")]
    NoSamples(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// `n` sampled outcomes per task; `None` is a failed sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeMatrix {
    pub tasks: Vec<Task>,
    pub samples: Vec<Vec<Option<Solution>>>,
}

impl OutcomeMatrix {
    pub fn new(tasks: Vec<Task>, samples: Vec<Vec<Option<Solution>>>) -> Result<Self, MetricsError> {
        if tasks.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(idx) = samples.iter().position(Vec::is_empty) {
            return Err(MetricsError::NoSamples(idx));
        }
        if samples.len() != tasks.len() {
            return Err(MetricsError::NoSamples(samples.len().min(tasks.len())));
        }
        Ok(OutcomeMatrix { tasks, samples })
    }

    /// Runs `policy` `n` times per task, varying the gate seed per sample.
    pub fn sample(
        tasks: &[Task],
        policy: &SymbolicPolicy,
        budget: &BudgetConfig,
        runtime: &Runtime,
        n: usize,
        seed: u64,
    ) -> Result<Self, MetricsError> {
        let samples = tasks
            .par_iter()
            .enumerate()
            .map(|(t, task)| {
                (0..n)
                    .map(|k| {
                        let mut policy = *policy;
                        policy.cfg.rng_seed = derive_seed(derive_seed(seed, t as u64), k as u64);
                        policy.solve(task, budget, runtime).solution
                    })
                    .collect()
            })
            .collect();
        OutcomeMatrix::new(tasks.to_vec(), samples)
    }

    fn first(&self, n: usize) -> impl Iterator<Item = (&Task, &[Option<Solution>])> {
        self.tasks.iter().zip(self.samples.iter().map(move |s| &s[..n.min(s.len())]))
    }

    /// Fraction of tasks where one of the first `n` samples validates.
    pub fn pass_at_n(&self, n: usize) -> f64 {
        let hits = self.first(n).filter(|(task, s)| s.iter().flatten().any(|sol| validate_solution(task, sol))).count();
        hits as f64 / self.tasks.len() as f64
    }

    /// Fraction of tasks whose majority answer among the first `n` samples
    /// validates.
    pub fn cons_at_n(&self, n: usize) -> f64 {
        let hits =
            self.first(n).filter(|(task, s)| majority(s).is_some_and(|sol| validate_solution(task, sol))).count();
        hits as f64 / self.tasks.len() as f64
    }
}

/// Most frequent canonical solution; ties go to the lexicographically
/// smallest canonical string.
pub fn majority(samples: &[Option<Solution>]) -> Option<&Solution> {
    let mut votes: BTreeMap<String, (usize, &Solution)> = BTreeMap::new();
    for sol in samples.iter().flatten() {
        votes.entry(sol.canonical()).or_insert((0, sol)).0 += 1;
    }
    // BTreeMap iterates keys ascending, so the first maximum is the smallest string
    let mut best: Option<(usize, &Solution)> = None;
    for (count, sol) in votes.into_values() {
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, sol));
        }
    }
    best.map(|(_, sol)| sol)
}

/// One evaluated run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRow {
    pub task: usize,
    pub method: String,
    pub config: String,
    pub solved: bool,
    pub total_tokens: usize,
    pub sequential_tokens: usize,
    pub child_count: usize,
    pub max_thread_tokens: usize,
    pub latency_ns: u64,
}

impl EvalRow {
    pub fn from_outcome(task: usize, method: &str, config: &str, outcome: &SolveOutcome, pool: &WorkerPool) -> Self {
        let trace = &outcome.trace;
        EvalRow {
            task,
            method: method.to_string(),
            config: config.to_string(),
            solved: outcome.solved(),
            total_tokens: trace.total_tokens(),
            sequential_tokens: trace.sequential_tokens(),
            child_count: trace.child_count(),
            max_thread_tokens: trace.max_window_tokens(),
            latency_ns: u64::try_from(crate::runtime::simulate_latency(trace, pool).as_nanos()).unwrap_or(u64::MAX),
        }
    }
}

/// A named solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub label: String,
    pub policy: SymbolicPolicy,
    pub budget: BudgetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pool: WorkerPool,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub config: String,
    pub n_tasks: usize,
    pub accuracy: f64,
    pub mean_total_tokens: f64,
    pub mean_sequential_tokens: f64,
    pub mean_child_count: f64,
    pub mean_latency_ms: f64,
}

impl EvalReport {
    /// Runs every configuration on every task. The gate seed of task `i` is
    /// derived from `seed`, so all configurations see the same draws.
    pub fn evaluate(
        tasks: &[Task],
        configs: &[EvalConfig],
        runtime: &Runtime,
        seed: u64,
    ) -> Result<Self, MetricsError> {
        if tasks.is_empty() || configs.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut rows = Vec::with_capacity(tasks.len() * configs.len());
        for config in configs {
            let method = config.policy.method.to_string();
            let batch: Vec<EvalRow> = tasks
                .par_iter()
                .enumerate()
                .map(|(i, task)| {
                    let mut policy = config.policy;
                    policy.cfg.rng_seed = derive_seed(seed, i as u64);
                    let outcome = policy.solve(task, &config.budget, runtime);
                    EvalRow::from_outcome(i, &method, &config.label, &outcome, &runtime.pool)
                })
                .collect();
            rows.extend(batch);
        }
        Ok(EvalReport { pool: runtime.pool, rows })
    }

    /// Rows grouped by (method, config) in first-seen order.
    pub fn groups(&self) -> Vec<((String, String), Vec<&EvalRow>)> {
        let mut groups: Vec<((String, String), Vec<&EvalRow>)> = Vec::new();
        for row in &self.rows {
            let key = (row.method.clone(), row.config.clone());
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, rows)) => rows.push(row),
                None => groups.push((key, vec![row])),
            }
        }
        groups
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        self.groups()
            .into_iter()
            .map(|((method, config), rows)| {
                let n = rows.len() as f64;
                let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
                Aggregate {
                    method,
                    config,
                    n_tasks: rows.len(),
                    accuracy: mean(|r| f64::from(u8::from(r.solved))),
                    mean_total_tokens: mean(|r| r.total_tokens as f64),
                    mean_sequential_tokens: mean(|r| r.sequential_tokens as f64),
                    mean_child_count: mean(|r| r.child_count as f64),
                    mean_latency_ms: mean(|r| r.latency_ns as f64 / 1e6),
                }
            })
            .collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), MetricsError> {
        let mut out = BufWriter::new(File::create(path)?);
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fraction of rows solved with every thread within `cap` tokens, per cap.
pub fn cumulative_accuracy(rows: &[&EvalRow], caps: &[usize]) -> Vec<(usize, f64)> {
    caps.iter()
        .map(|&cap| {
            let hits = rows.iter().filter(|r| r.solved && r.max_thread_tokens <= cap).count();
            (cap, if rows.is_empty() { 0.0 } else { hits as f64 / rows.len() as f64 })
        })
        .collect()
}

/// Fraction of rows solved with `measure(row) <= x`, per grid point.
fn budget_curve(rows: &[&EvalRow], grid: &[u64], measure: fn(&EvalRow) -> u64) -> Vec<(u64, f64)> {
    grid.iter()
        .map(|&x| {
            let hits = rows.iter().filter(|r| r.solved && measure(r) <= x).count();
            (x, hits as f64 / rows.len() as f64)
        })
        .collect()
}

/// X axes of the four curves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveGrid {
    pub total_tokens: Vec<u64>,
    pub sequential_tokens: Vec<u64>,
    pub latency_ms: Vec<u64>,
    pub context_caps: Vec<usize>,
}

impl Default for CurveGrid {
    fn default() -> Self {
        CurveGrid {
            total_tokens: (1..=40).map(|k| k * 512).collect(),
            sequential_tokens: (1..=16).map(|k| k * 512).collect(),
            latency_ms: (1..=30).map(|k| k * 1000).collect(),
            context_caps: (1..=8).map(|k| k * 512).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    x_value: u64,
    accuracy: f64,
    n_tasks: usize,
    method: &'a str,
    config: &'a str,
}

pub const TOTAL_TOKENS_CSV: &str = "accuracy_vs_total_tokens.csv";
pub const SEQUENTIAL_TOKENS_CSV: &str = "accuracy_vs_sequential_tokens.csv";
pub const LATENCY_CSV: &str = "accuracy_vs_latency.csv";
pub const CONTEXT_CAP_CSV: &str = "accuracy_vs_context_cap.csv";

fn write_curve(
    path: &Path,
    header_comment: Option<&str>,
    groups: &[((String, String), Vec<&EvalRow>)],
    points: impl Fn(&[&EvalRow]) -> Vec<(u64, f64)>,
) -> Result<(), MetricsError> {
    let mut file = BufWriter::new(File::create(path)?);
    if let Some(comment) = header_comment {
        writeln!(file, "# {comment}")?;
    }
    let mut writer = csv::Writer::from_writer(file);
    for ((method, config), rows) in groups {
        for (x_value, accuracy) in points(rows) {
            writer.serialize(CurveRow { x_value, accuracy, n_tasks: rows.len(), method, config })?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Writes the four accuracy curves into `dir` and returns their paths.
pub fn compute_curves(report: &EvalReport, grid: &CurveGrid, dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
    if report.rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let groups = report.groups();
    let pool = report.pool;
    let latency_note = format!(
        "workers={} per_token_time_ns={} spawn_overhead_ns={}",
        pool.workers,
        pool.per_token_time.as_nanos(),
        pool.spawn_overhead.as_nanos()
    );
    let paths: Vec<PathBuf> =
        [TOTAL_TOKENS_CSV, SEQUENTIAL_TOKENS_CSV, LATENCY_CSV, CONTEXT_CAP_CSV].iter().map(|f| dir.join(f)).collect();
    write_curve(&paths[0], None, &groups, |rows| budget_curve(rows, &grid.total_tokens, |r| r.total_tokens as u64))?;
    write_curve(&paths[1], None, &groups, |rows| {
        budget_curve(rows, &grid.sequential_tokens, |r| r.sequential_tokens as u64)
    })?;
    write_curve(&paths[2], Some(&latency_note), &groups, |rows| {
        let grid_ns: Vec<u64> = grid.latency_ms.iter().map(|ms| ms * 1_000_000).collect();
        budget_curve(rows, &grid_ns, |r| r.latency_ns).into_iter().map(|(x, a)| (x / 1_000_000, a)).collect()
    })?;
    write_curve(&paths[3], None, &groups, |rows| {
        cumulative_accuracy(rows, &grid.context_caps).into_iter().map(|(c, a)| (c as u64, a)).collect()
    })?;
    Ok(paths)
}
