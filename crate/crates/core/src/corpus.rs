//! Demonstration corpus: one JSON line per task with the canonical text of
//! every thread, a conditioning tag and the outcome.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecError, ThreadText, TraceText};
use crate::countdown::{sample_tasks, Task, TaskError};
use crate::runtime::Runtime;
use crate::search::derive_seed;
use crate::solvers::{BudgetConfig, Method, SolveStatus, SymbolicPolicy, MAX_CHILD_THREADS};

pub const SCHEMA_VERSION: u32 = 1;
pub const BIN_WIDTH: usize = 512;
/// Context window used by the rejection filter.
pub const FILTER_WINDOW: usize = 4096;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    LengthBin,
    ChildCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionTag {
    pub kind: ConditionKind,
    pub value: usize,
}

impl ConditionTag {
    pub fn length_bin(total_tokens: usize) -> Self {
        ConditionTag { kind: ConditionKind::LengthBin, value: length_bin(total_tokens) }
    }

    pub fn child_count(children: usize) -> Self {
        ConditionTag { kind: ConditionKind::ChildCount, value: children.min(MAX_CHILD_THREADS) }
    }
}

/// Smallest multiple of 512 holding `total_tokens`; at least one bin.
pub fn length_bin(total_tokens: usize) -> usize {
    total_tokens.div_ceil(BIN_WIDTH).max(1) * BIN_WIDTH
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub schema_version: u32,
    pub task: Task,
    pub threads: Vec<ThreadText>,
    pub condition: ConditionTag,
    pub status: SolveStatus,
}

impl CorpusRecord {
    pub fn text(&self) -> TraceText {
        TraceText { threads: self.threads.clone() }
    }

    /// Generated tokens over all threads, recounted from the text.
    pub fn total_tokens(&self) -> Result<usize, CodecError> {
        Ok(self.text().token_count()?.total)
    }

    /// Serialized form with `<` escaped.
    pub fn to_json_line(&self) -> String {
        let json = serde_json::to_string(self).expect("corpus records always serialize");
        json.replace('<', "\\u003c")
    }
}

/// Runs `policy` on each task and records the outcome. The gate seed of task
/// `i` is derived from `seed` and `i`, so records do not depend on how the
/// work is sharded.
pub fn records_for(
    tasks: &[Task],
    policy: &SymbolicPolicy,
    budget: &BudgetConfig,
    runtime: &Runtime,
    seed: u64,
) -> Result<Vec<CorpusRecord>, CorpusError> {
    tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let mut policy = *policy;
            policy.cfg.rng_seed = derive_seed(seed, i as u64);
            let outcome = policy.solve(task, budget, runtime);
            let text = codec::encode(&outcome.trace)?;
            let condition = match policy.method {
                Method::SosPlus => ConditionTag::length_bin(outcome.trace.total_tokens()),
                Method::Apr => ConditionTag::child_count(outcome.trace.child_count()),
            };
            Ok(CorpusRecord {
                schema_version: SCHEMA_VERSION,
                task: task.clone(),
                threads: text.threads,
                condition,
                status: outcome.status,
            })
        })
        .collect()
}

/// Samples `n` tasks and records one demonstration per task.
pub fn generate_corpus(
    n: usize,
    num_inputs: usize,
    policy: &SymbolicPolicy,
    budget: &BudgetConfig,
    seed: u64,
) -> Result<Vec<CorpusRecord>, CorpusError> {
    let tasks = sample_tasks(n, num_inputs, 100, seed)?;
    records_for(&tasks, policy, budget, &Runtime::default(), seed)
}

/// Keeps solved records that fit the context window.
pub fn rejection_filter(records: &[CorpusRecord]) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut kept = Vec::new();
    for record in records {
        if record.status == SolveStatus::GoalReached && record.total_tokens()? <= FILTER_WINDOW {
            kept.push(record.clone());
        }
    }
    Ok(kept)
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        writeln!(out, "{}", record.to_json_line())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: idx + 1, source })?;
        records.push(record);
    }
    Ok(records)
}
