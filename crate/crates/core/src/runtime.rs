//! Spawn/join execution engine.
//!
//! A [`Policy`] produces one [`ThreadPolicy`] per thread. The runtime drives
//! the root thread, runs one child per spawned message, inserts the children's
//! join messages into the parent's context once all of them have finished, and
//! records everything in a [`Trace`]. Children may not spawn.
//!
//! Token accounting uses the lexical counter in [`crate::codec`]. A thread's
//! window is its prefix context, everything it generated, and the join
//! messages inserted into it; the window never exceeds the context cap. A
//! child always keeps room for the failure join so its parent hears back.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, count_tokens};
use crate::countdown::{Solution, Task};
use crate::search::SearchState;
use crate::solvers::BudgetConfig;

pub type ThreadId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThreadEvent {
    /// One generated line.
    Step { text: String, tokens: usize },
    /// A spawn block plus the join messages the parent received afterwards
    /// (`None` is the failure sentinel).
    Spawn {
        children: Vec<ThreadId>,
        messages: Vec<String>,
        tokens: usize,
        returned: Vec<Option<String>>,
        returned_tokens: usize,
    },
    /// A child's terminating join.
    Join { message: Option<String>, tokens: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadRecord {
    pub id: ThreadId,
    pub parent: Option<ThreadId>,
    pub context: String,
    pub context_tokens: usize,
    pub generated_tokens: usize,
    /// Tokens of join messages inserted into this thread's context.
    pub received_tokens: usize,
    pub events: Vec<ThreadEvent>,
}

impl ThreadRecord {
    fn new(id: ThreadId, parent: Option<ThreadId>, context: String) -> Self {
        let context_tokens = count_tokens(&context);
        ThreadRecord {
            id,
            parent,
            context,
            context_tokens,
            generated_tokens: 0,
            received_tokens: 0,
            events: Vec::new(),
        }
    }

    /// Tokens occupying this thread's context window.
    pub fn window_tokens(&self) -> usize {
        self.context_tokens + self.generated_tokens + self.received_tokens
    }

    /// Child ids of each spawn, in order.
    pub fn spawns(&self) -> impl Iterator<Item = &[ThreadId]> {
        self.events.iter().filter_map(|e| match e {
            ThreadEvent::Spawn { children, .. } => Some(children.as_slice()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThreadStatus {
    Finished,
    BudgetExhausted,
    ProtocolError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    /// The root proposed a solution.
    Answered,
    /// The root gave up.
    NoResult,
    BudgetExhausted,
    ProtocolError,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("thread {thread}: {reason}")]
pub struct ProtocolError {
    pub thread: ThreadId,
    pub reason: String,
}

/// A finished run: the thread tree in id order (root first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub threads: Vec<ThreadRecord>,
    pub status: Vec<ThreadStatus>,
    pub outcome: RunStatus,
    pub answer: Option<Solution>,
    pub errors: Vec<ProtocolError>,
    /// Simulated generation time per thread.
    pub timing: Vec<Duration>,
}

impl Trace {
    pub fn root(&self) -> &ThreadRecord {
        &self.threads[0]
    }

    pub fn total_tokens(&self) -> usize {
        self.threads.iter().map(|t| t.generated_tokens).sum()
    }

    /// Longest causal chain: the root's own tokens plus, per spawn, the
    /// longest child.
    pub fn sequential_tokens(&self) -> usize {
        let root = self.root();
        let children: usize =
            root.spawns().map(|ids| ids.iter().map(|&id| self.threads[id].generated_tokens).max().unwrap_or(0)).sum();
        root.generated_tokens + children
    }

    pub fn child_count(&self) -> usize {
        self.threads.len() - 1
    }

    pub fn spawn_count(&self) -> usize {
        self.root().spawns().count()
    }

    pub fn max_spawn_width(&self) -> usize {
        self.root().spawns().map(<[ThreadId]>::len).max().unwrap_or(0)
    }

    /// Largest context-window occupancy over all threads.
    pub fn max_window_tokens(&self) -> usize {
        self.threads.iter().map(ThreadRecord::window_tokens).max().unwrap_or(0)
    }
}

/// Simulated pool the children of a spawn are scheduled on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerPool {
    pub workers: usize,
    pub per_token_time: Duration,
    pub spawn_overhead: Duration,
}

impl Default for WorkerPool {
    fn default() -> Self {
        WorkerPool { workers: 7, per_token_time: Duration::from_millis(3), spawn_overhead: Duration::from_millis(50) }
    }
}

impl WorkerPool {
    pub fn new(workers: usize, per_token_time: Duration, spawn_overhead: Duration) -> Self {
        WorkerPool { workers: workers.max(1), per_token_time, spawn_overhead }
    }

    fn cost(&self, tokens: usize) -> Duration {
        let nanos = self.per_token_time.as_nanos().saturating_mul(tokens as u128);
        Duration::from_nanos(u64::try_from(nanos).unwrap_or(u64::MAX))
    }
}

/// Greedy longest-first list scheduling; each job goes to the least loaded
/// worker (lowest index on ties).
pub fn makespan(durations: &[Duration], workers: usize) -> Duration {
    let mut jobs = durations.to_vec();
    jobs.sort_by(|a, b| b.cmp(a));
    let mut loads = vec![Duration::ZERO; workers.max(1)];
    for job in jobs {
        let slot =
            loads.iter().enumerate().min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0))).map(|(i, _)| i).unwrap_or(0);
        loads[slot] += job;
    }
    loads.into_iter().max().unwrap_or(Duration::ZERO)
}

/// Wall-clock estimate: the root's own generation, plus for every spawn its
/// overhead and the makespan of its children on the pool. Prefill is free.
pub fn simulate_latency(trace: &Trace, pool: &WorkerPool) -> Duration {
    let root = trace.root();
    let mut total = pool.cost(root.generated_tokens);
    for children in root.spawns() {
        let jobs: Vec<Duration> = children.iter().map(|&id| pool.cost(trace.threads[id].generated_tokens)).collect();
        total += pool.spawn_overhead + makespan(&jobs, pool.workers);
    }
    total
}

/// What a thread does next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Generate one line.
    Emit(String),
    /// Root only: start one child per message and wait for all of them.
    Spawn(Vec<String>),
    /// Child only: terminate, returning a message (`None` = failure).
    Join(Option<String>),
    /// Root only: terminate with a proposed solution, or give up.
    Answer(Option<Solution>),
    /// Abort the thread with a protocol error; a child still sends the failure join.
    Fail(String),
}

/// What a thread policy sees at each step.
#[derive(Debug)]
pub struct ThreadView<'a> {
    pub id: ThreadId,
    pub is_root: bool,
    /// Context plus everything generated or received so far, newline-joined.
    pub transcript: &'a str,
    pub used_tokens: usize,
    pub cap_tokens: usize,
    /// Children the root may still spawn.
    pub children_remaining: usize,
    /// Join messages, present only on the first step after a spawn.
    pub joined: Option<&'a [Option<String>]>,
}

pub trait ThreadPolicy: Send {
    fn next(&mut self, view: &ThreadView<'_>) -> Action;
}

pub trait Policy: Sync {
    fn root(&self, task: &Task) -> Box<dyn ThreadPolicy + '_>;
    /// Builds a child from the message it was spawned with.
    fn child(&self, message: &str) -> Result<Box<dyn ThreadPolicy + '_>, String>;
}

/// Runs policies over a worker pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct Runtime {
    pub pool: WorkerPool,
    /// Execute the children of a spawn on the rayon pool.
    pub parallel: bool,
}

struct ThreadRun {
    record: ThreadRecord,
    status: ThreadStatus,
    errors: Vec<ProtocolError>,
    answer: Option<Option<Solution>>,
    transcript: String,
}

impl ThreadRun {
    fn new(record: ThreadRecord) -> Self {
        let transcript = record.context.clone();
        ThreadRun { record, status: ThreadStatus::Finished, errors: Vec::new(), answer: None, transcript }
    }

    fn push_line(&mut self, line: &str) {
        self.transcript.push('\n');
        self.transcript.push_str(line);
    }

    fn protocol_error(&mut self, reason: impl Into<String>) {
        self.status = ThreadStatus::ProtocolError;
        self.errors.push(ProtocolError { thread: self.record.id, reason: reason.into() });
    }

    fn used(&self) -> usize {
        self.record.window_tokens()
    }

    fn fits(&self, extra: usize, cap: usize) -> bool {
        self.used().saturating_add(extra) <= cap
    }

    fn step(&mut self, text: String, tokens: usize) {
        self.push_line(&text);
        self.record.generated_tokens += tokens;
        self.record.events.push(ThreadEvent::Step { text, tokens });
    }

    fn join(&mut self, message: Option<String>) {
        let line = codec::render_join(message.as_deref());
        let tokens = count_tokens(&line);
        self.push_line(&line);
        self.record.generated_tokens += tokens;
        self.record.events.push(ThreadEvent::Join { message, tokens });
    }
}

fn line_problem(text: &str) -> Option<&'static str> {
    if text.contains('\n') {
        Some("line contains a newline")
    } else if codec::contains_marker(text) {
        Some("payload contains a spawn/join marker")
    } else {
        None
    }
}

impl Runtime {
    pub fn new(pool: WorkerPool) -> Self {
        Runtime { pool, parallel: true }
    }

    pub fn sequential(pool: WorkerPool) -> Self {
        Runtime { pool, parallel: false }
    }

    /// Drives `policy` on `task` and returns the complete trace.
    pub fn run(&self, policy: &dyn Policy, task: &Task, budget: &BudgetConfig) -> Trace {
        let cap = budget.context_cap_tokens;
        let context = codec::render_state(&SearchState::start(task));
        let mut root = ThreadRun::new(ThreadRecord::new(0, None, context));
        let mut children: Vec<(ThreadRecord, ThreadStatus, Vec<ProtocolError>)> = Vec::new();
        let mut thread = policy.root(task);
        let mut child_budget = budget.child_limit();
        let mut joined: Option<Vec<Option<String>>> = None;

        loop {
            let action = {
                let view = ThreadView {
                    id: 0,
                    is_root: true,
                    transcript: &root.transcript,
                    used_tokens: root.used(),
                    cap_tokens: cap,
                    children_remaining: child_budget,
                    joined: joined.as_deref(),
                };
                thread.next(&view)
            };
            joined = None;
            match action {
                Action::Emit(text) => {
                    if let Some(problem) = line_problem(&text) {
                        root.protocol_error(problem);
                        break;
                    }
                    let tokens = count_tokens(&text);
                    if tokens == 0 {
                        root.protocol_error("empty step");
                        break;
                    }
                    if !root.fits(tokens, cap) {
                        root.status = ThreadStatus::BudgetExhausted;
                        break;
                    }
                    root.step(text, tokens);
                }
                Action::Spawn(messages) => {
                    if messages.is_empty() {
                        root.protocol_error("spawn without messages");
                        break;
                    }
                    if messages.len() > child_budget {
                        root.protocol_error(format!(
                            "spawn of {} children exceeds remaining child budget {child_budget}",
                            messages.len()
                        ));
                        break;
                    }
                    if let Some(problem) = messages.iter().find_map(|m| {
                        if m.contains(codec::MESSAGE_SEPARATOR.trim()) {
                            Some("message contains the separator")
                        } else {
                            line_problem(m)
                        }
                    }) {
                        root.protocol_error(problem);
                        break;
                    }
                    let block = codec::render_spawn(&messages);
                    let tokens = count_tokens(&block);
                    let reserve = messages.len() * codec::fail_join_tokens();
                    if !root.fits(tokens + reserve, cap) {
                        root.status = ThreadStatus::BudgetExhausted;
                        break;
                    }
                    root.push_line(&block);
                    root.record.generated_tokens += tokens;
                    child_budget -= messages.len();

                    let first_id = children.len() + 1;
                    let ids: Vec<ThreadId> = (first_id..first_id + messages.len()).collect();
                    let runs: Vec<ThreadRun> = if self.parallel && messages.len() > 1 {
                        ids.par_iter()
                            .zip(messages.par_iter())
                            .map(|(&id, msg)| run_child(policy, id, msg, cap))
                            .collect()
                    } else {
                        ids.iter().zip(&messages).map(|(&id, msg)| run_child(policy, id, msg, cap)).collect()
                    };

                    let mut returned = Vec::with_capacity(runs.len());
                    let mut returned_tokens = 0;
                    let fail_tokens = codec::fail_join_tokens();
                    for (idx, run) in runs.iter().enumerate() {
                        let mut message = match run.record.events.last() {
                            Some(ThreadEvent::Join { message, .. }) => message.clone(),
                            _ => None,
                        };
                        let still_pending = (runs.len() - idx - 1) * fail_tokens;
                        let mut line = codec::render_join(message.as_deref());
                        let mut cost = count_tokens(&line);
                        if !root.fits(returned_tokens + cost + still_pending, cap) {
                            message = None;
                            line = codec::render_join(None);
                            cost = fail_tokens;
                        }
                        root.push_line(&line);
                        returned_tokens += cost;
                        returned.push(message);
                    }
                    root.record.received_tokens += returned_tokens;
                    root.record.events.push(ThreadEvent::Spawn {
                        children: ids,
                        messages,
                        tokens,
                        returned: returned.clone(),
                        returned_tokens,
                    });
                    for run in runs {
                        root.errors.extend(run.errors.iter().cloned());
                        children.push((run.record, run.status, run.errors));
                    }
                    joined = Some(returned);
                }
                Action::Join(_) => {
                    root.protocol_error("root thread cannot join");
                    break;
                }
                Action::Fail(reason) => {
                    root.protocol_error(reason);
                    break;
                }
                Action::Answer(solution) => {
                    let line = codec::render_answer(task, solution.as_ref());
                    let tokens = count_tokens(&line);
                    if !root.fits(tokens, cap) {
                        root.status = ThreadStatus::BudgetExhausted;
                        break;
                    }
                    root.step(line, tokens);
                    root.answer = Some(solution);
                    break;
                }
            }
        }

        let outcome = match (root.status, &root.answer) {
            (ThreadStatus::ProtocolError, _) => RunStatus::ProtocolError,
            (ThreadStatus::BudgetExhausted, _) => RunStatus::BudgetExhausted,
            (ThreadStatus::Finished, Some(Some(_))) => RunStatus::Answered,
            (ThreadStatus::Finished, _) => RunStatus::NoResult,
        };
        let ThreadRun { record, status, errors, answer, .. } = root;
        let mut threads = vec![record];
        let mut statuses = vec![status];
        for (record, status, _) in children {
            threads.push(record);
            statuses.push(status);
        }
        let timing = threads.iter().map(|t| self.pool.cost(t.generated_tokens)).collect();
        Trace { threads, status: statuses, outcome, answer: answer.flatten(), errors, timing }
    }

    pub fn latency(&self, trace: &Trace) -> Duration {
        simulate_latency(trace, &self.pool)
    }
}

fn run_child(policy: &dyn Policy, id: ThreadId, message: &str, cap: usize) -> ThreadRun {
    let mut run = ThreadRun::new(ThreadRecord::new(id, Some(0), message.to_string()));
    let fail_tokens = codec::fail_join_tokens();
    let mut thread = match policy.child(message) {
        Ok(thread) => thread,
        Err(reason) => {
            run.protocol_error(format!("bad child message: {reason}"));
            run.join(None);
            return run;
        }
    };
    loop {
        let action = {
            let view = ThreadView {
                id,
                is_root: false,
                transcript: &run.transcript,
                used_tokens: run.used(),
                cap_tokens: cap,
                children_remaining: 0,
                joined: None,
            };
            thread.next(&view)
        };
        match action {
            Action::Emit(text) => {
                if let Some(problem) = line_problem(&text) {
                    run.protocol_error(problem);
                    break;
                }
                let tokens = count_tokens(&text);
                if tokens == 0 {
                    run.protocol_error("empty step");
                    break;
                }
                if !run.fits(tokens + fail_tokens, cap) {
                    run.status = ThreadStatus::BudgetExhausted;
                    break;
                }
                run.step(text, tokens);
            }
            Action::Spawn(_) => {
                run.protocol_error("child threads cannot spawn");
                break;
            }
            Action::Answer(_) => {
                run.protocol_error("child threads cannot answer");
                break;
            }
            Action::Fail(reason) => {
                run.protocol_error(reason);
                break;
            }
            Action::Join(message) => {
                if let Some(problem) = message.as_deref().and_then(line_problem) {
                    run.protocol_error(problem);
                    break;
                }
                let cost = count_tokens(&codec::render_join(message.as_deref()));
                if run.fits(cost, cap) {
                    run.join(message);
                } else {
                    run.status = ThreadStatus::BudgetExhausted;
                    run.join(None);
                }
                return run;
            }
        }
    }
    run.join(None);
    run
}

/// Replays a fixed list of actions; children are keyed by their message.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    pub root: Vec<Action>,
    pub children: std::collections::BTreeMap<String, Vec<Action>>,
}

struct ScriptedThread {
    actions: std::vec::IntoIter<Action>,
    is_root: bool,
}

impl ThreadPolicy for ScriptedThread {
    fn next(&mut self, _view: &ThreadView<'_>) -> Action {
        self.actions.next().unwrap_or(if self.is_root { Action::Answer(None) } else { Action::Join(None) })
    }
}

impl Policy for ScriptedPolicy {
    fn root(&self, _task: &Task) -> Box<dyn ThreadPolicy + '_> {
        Box::new(ScriptedThread { actions: self.root.clone().into_iter(), is_root: true })
    }

    fn child(&self, message: &str) -> Result<Box<dyn ThreadPolicy + '_>, String> {
        let actions = self.children.get(message).cloned().ok_or_else(|| format!("no script for {message:?}"))?;
        Ok(Box::new(ScriptedThread { actions: actions.into_iter(), is_root: false }))
    }
}
