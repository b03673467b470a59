//! The two symbolic policies.
//!
//! Both run the same loop: pop the oldest state from a FIFO deque, stop on the
//! goal, otherwise expand it. When the promising gate fires, SoS+ recurses
//! depth-first on the state inside the same thread, while APR hands each
//! successor to a child thread and waits for their join messages. Children
//! search breadth-first and never spawn.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::countdown::{validate_solution, Solution, Task};
use crate::runtime::{Action, Policy, RunStatus, Runtime, ThreadPolicy, ThreadView, Trace, WorkerPool};
use crate::search::{expand_with_beam, is_promising, ExpansionConfig, SearchState, UNBOUNDED_BEAM};

/// Hard ceiling on children per root thread.
pub const MAX_CHILD_THREADS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetConfig {
    /// Per-thread context window.
    pub context_cap_tokens: usize,
    /// Children the root may spawn over the whole run.
    pub max_child_threads: usize,
    /// Force spawning until exactly this many children exist.
    pub enforce_child_count: Option<usize>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig { context_cap_tokens: 4096, max_child_threads: MAX_CHILD_THREADS, enforce_child_count: None }
    }
}

impl BudgetConfig {
    pub fn with_cap(mut self, cap: usize) -> Self {
        self.context_cap_tokens = cap.max(1);
        self
    }

    pub fn with_children(mut self, max_child_threads: usize) -> Self {
        self.max_child_threads = max_child_threads.min(MAX_CHILD_THREADS);
        self
    }

    pub fn with_enforced_children(mut self, count: Option<usize>) -> Self {
        self.enforce_child_count = count.map(|c| c.min(MAX_CHILD_THREADS));
        self
    }

    pub fn unbounded() -> Self {
        BudgetConfig { context_cap_tokens: usize::MAX, ..BudgetConfig::default() }
    }

    /// Children the root may spawn in total; an enforced count takes
    /// precedence over the maximum.
    pub fn child_limit(&self) -> usize {
        self.enforce_child_count.unwrap_or(self.max_child_threads).min(MAX_CHILD_THREADS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sos+")]
    SosPlus,
    #[serde(rename = "apr")]
    Apr,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::SosPlus => "sos+",
            Method::Apr => "apr",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sos+" | "sos" | "sosplus" | "sos-plus" => Ok(Method::SosPlus),
            "apr" => Ok(Method::Apr),
            other => Err(format!("unknown method {other:?} (expected sos+ or apr)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    #[serde(rename = "goal_reached")]
    GoalReached,
    #[serde(rename = "no_result")]
    NoResult,
    #[serde(rename = "budget_exhausted")]
    BudgetExhausted,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::GoalReached => "goal_reached",
            SolveStatus::NoResult => "no_result",
            SolveStatus::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub solution: Option<Solution>,
    pub trace: Trace,
}

impl SolveOutcome {
    /// Classifies a finished run; a proposed answer only counts if it
    /// validates against the task.
    pub fn from_trace(task: &Task, trace: Trace) -> Self {
        let valid = trace.answer.as_ref().filter(|sol| validate_solution(task, sol)).cloned();
        let status = match trace.outcome {
            RunStatus::Answered if valid.is_some() => SolveStatus::GoalReached,
            RunStatus::BudgetExhausted => SolveStatus::BudgetExhausted,
            _ => SolveStatus::NoResult,
        };
        let solution = if status == SolveStatus::GoalReached { valid } else { None };
        SolveOutcome { status, solution, trace }
    }

    pub fn solved(&self) -> bool {
        self.status == SolveStatus::GoalReached
    }
}

/// A fully specified symbolic solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolicPolicy {
    pub method: Method,
    pub cfg: ExpansionConfig,
    /// Added to the beam width at spawn sites.
    pub spawn_width_bias: f64,
}

impl SymbolicPolicy {
    pub fn sos_plus(cfg: ExpansionConfig) -> Self {
        SymbolicPolicy { method: Method::SosPlus, cfg, spawn_width_bias: 0.0 }
    }

    pub fn apr(cfg: ExpansionConfig) -> Self {
        SymbolicPolicy { method: Method::Apr, cfg, spawn_width_bias: 0.0 }
    }

    pub fn with_spawn_width_bias(mut self, bias: f64) -> Self {
        self.spawn_width_bias = bias;
        self
    }

    fn spawn_beam(&self) -> usize {
        if self.cfg.beam_k == UNBOUNDED_BEAM {
            return UNBOUNDED_BEAM;
        }
        let widened = self.cfg.beam_k as f64 + self.spawn_width_bias;
        widened.round().max(1.0) as usize
    }

    pub fn solve(&self, task: &Task, budget: &BudgetConfig, runtime: &Runtime) -> SolveOutcome {
        let driver = PolicyDriver { policy: *self, enforce: budget.enforce_child_count };
        let trace = runtime.run(&driver, task, budget);
        SolveOutcome::from_trace(task, trace)
    }
}

struct PolicyDriver {
    policy: SymbolicPolicy,
    enforce: Option<usize>,
}

impl Policy for PolicyDriver {
    fn root(&self, task: &Task) -> Box<dyn ThreadPolicy + '_> {
        Box::new(SearchThread::new(self.policy, SearchState::start(task), true, self.enforce))
    }

    fn child(&self, message: &str) -> Result<Box<dyn ThreadPolicy + '_>, String> {
        let state = codec::parse_state(message).ok_or_else(|| format!("not a search state: {message:?}"))?;
        Ok(Box::new(SearchThread::new(self.policy, state, false, None)))
    }
}

/// One thread of the search loop, advanced one popped state at a time.
struct SearchThread {
    policy: SymbolicPolicy,
    start: SearchState,
    main: bool,
    enforce: Option<usize>,
    spawned: usize,
    started: bool,
    done: bool,
    /// Deque stack; SoS+ pushes a frame when it recurses on a promising state.
    frames: Vec<VecDeque<SearchState>>,
    pending: VecDeque<Action>,
}

impl SearchThread {
    fn new(policy: SymbolicPolicy, start: SearchState, main: bool, enforce: Option<usize>) -> Self {
        SearchThread {
            policy,
            start,
            main,
            enforce,
            spawned: 0,
            started: false,
            done: false,
            frames: Vec::new(),
            pending: VecDeque::new(),
        }
    }

    fn finish(&mut self, path: Option<&SearchState>) {
        self.done = true;
        let action = match (self.main, path) {
            (true, found) => Action::Answer(found.map(SearchState::solution)),
            (false, found) => Action::Join(found.map(|s| codec::render_ops(&s.path))),
        };
        self.pending.push_back(action);
    }

    fn expand_into(&mut self, states: Vec<SearchState>, new_frame: bool) {
        for state in &states {
            if let Some(op) = state.path.last() {
                self.pending.push_back(Action::Emit(codec::render_explore(op)));
                self.pending.push_back(Action::Emit(codec::render_state(state)));
            }
        }
        if new_frame {
            self.frames.push(states.into());
        } else if let Some(top) = self.frames.last_mut() {
            top.extend(states);
        }
    }

    fn wants_spawn(&self, state: &SearchState, children_remaining: usize) -> bool {
        if !self.main || self.policy.method != Method::Apr || children_remaining == 0 || state.remaining.len() < 2 {
            return false;
        }
        let forced = self.enforce.is_some_and(|count| self.spawned < count);
        forced || is_promising(state, &self.policy.cfg)
    }

    /// Runs the loop until it has something to say.
    fn advance(&mut self, children_remaining: usize) {
        let beam = self.policy.cfg.beam_k;
        if !self.started {
            self.started = true;
            if self.start.is_goal() {
                let start = self.start.clone();
                self.finish(Some(&start));
                return;
            }
            self.frames.push(VecDeque::new());
            let successors = expand_with_beam(&self.start, beam);
            self.expand_into(successors, false);
            if !self.pending.is_empty() {
                return;
            }
        }
        while self.frames.last().is_some_and(VecDeque::is_empty) {
            self.frames.pop();
        }
        let Some(current) = self.frames.last_mut().and_then(VecDeque::pop_front) else {
            self.finish(None);
            return;
        };
        self.pending.push_back(Action::Emit(codec::render_state(&current)));
        if current.is_goal() {
            self.finish(Some(&current));
            return;
        }
        if self.wants_spawn(&current, children_remaining) {
            let mut to_spawn = expand_with_beam(&current, self.policy.spawn_beam());
            to_spawn.truncate(children_remaining);
            if !to_spawn.is_empty() {
                let leftover: Vec<SearchState> =
                    expand_with_beam(&current, beam).into_iter().filter(|s| !to_spawn.contains(s)).collect();
                self.expand_into(leftover, false);
                self.spawned += to_spawn.len();
                let messages = to_spawn.iter().map(codec::render_state).collect();
                self.pending.push_back(Action::Spawn(messages));
                return;
            }
        }
        let recurse = self.policy.method == Method::SosPlus && is_promising(&current, &self.policy.cfg);
        let successors = expand_with_beam(&current, beam);
        self.expand_into(successors, recurse);
    }

    fn accept_joins(&mut self, joined: &[Option<String>]) {
        for message in joined.iter().flatten() {
            let Some(ops) = codec::parse_ops(message) else { continue };
            let mut state = self.start.clone();
            let replayed = ops.into_iter().try_for_each(|op| {
                state = state.apply(op).filter(|_| op.is_consistent())?;
                Some(())
            });
            if replayed.is_some() && state.is_goal() {
                self.pending.clear();
                self.finish(Some(&state));
                return;
            }
        }
    }
}

impl ThreadPolicy for SearchThread {
    fn next(&mut self, view: &ThreadView<'_>) -> Action {
        if let Some(joined) = view.joined {
            if !self.done {
                self.accept_joins(joined);
            }
        }
        loop {
            if let Some(action) = self.pending.pop_front() {
                return action;
            }
            if self.done {
                return if self.main { Action::Answer(None) } else { Action::Join(None) };
            }
            self.advance(view.children_remaining);
        }
    }
}

/// Serialized hybrid BFS/DFS search in a single thread.
pub fn solve_sos_plus(task: &Task, cfg: &ExpansionConfig, budget: &BudgetConfig) -> SolveOutcome {
    SymbolicPolicy::sos_plus(*cfg).solve(task, budget, &Runtime::sequential(WorkerPool::default()))
}

/// Parallel search: promising states in the root are explored by children.
pub fn solve_apr(task: &Task, cfg: &ExpansionConfig, budget: &BudgetConfig, runtime: &Runtime) -> SolveOutcome {
    SymbolicPolicy::apr(*cfg).solve(task, budget, runtime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::ThreadEvent;

    fn task(inputs: &[u64], target: u64) -> Task {
        Task::new(inputs.to_vec(), target).unwrap()
    }

    #[test]
    fn worked_example_is_solved() {
        let t = task(&[1, 4, 6, 8], 10);
        let out = solve_sos_plus(&t, &ExpansionConfig::default(), &BudgetConfig::default());
        assert_eq!(out.status, SolveStatus::GoalReached);
        assert!(validate_solution(&t, out.solution.as_ref().unwrap()));
    }

    #[test]
    fn single_number_goal() {
        let t = task(&[7], 7);
        for out in [
            solve_sos_plus(&t, &ExpansionConfig::default(), &BudgetConfig::default()),
            solve_apr(&t, &ExpansionConfig::default(), &BudgetConfig::default(), &Runtime::default()),
        ] {
            assert_eq!(out.status, SolveStatus::GoalReached);
            assert_eq!(out.solution, Some(Solution::default()));
        }
        let out = solve_sos_plus(&task(&[7], 8), &ExpansionConfig::default(), &BudgetConfig::default());
        assert_eq!(out.status, SolveStatus::NoResult);
    }

    #[test]
    fn degenerate_apr_matches_sos_plus() {
        let cfg = ExpansionConfig::default().with_promising(0.0);
        for t in [task(&[22, 26, 31, 53], 27), task(&[1, 4, 6, 8], 10), task(&[3, 9, 14, 40], 93)] {
            let sos = solve_sos_plus(&t, &cfg, &BudgetConfig::default());
            let apr = solve_apr(&t, &cfg, &BudgetConfig::default(), &Runtime::default());
            assert_eq!(apr.trace.spawn_count(), 0);
            assert_eq!(codec::encode(&sos.trace).unwrap(), codec::encode(&apr.trace).unwrap());
            assert_eq!(sos.status, apr.status);
        }
    }

    #[test]
    fn children_never_exceed_limit() {
        let t = task(&[22, 26, 31, 53], 27);
        let cfg = ExpansionConfig::default().with_promising(0.5);
        for limit in [0, 1, 3, 10] {
            let budget = BudgetConfig::default().with_children(limit);
            let out = solve_apr(&t, &cfg, &budget, &Runtime::default());
            assert!(out.trace.child_count() <= limit);
            assert!(out.trace.errors.is_empty());
        }
    }

    #[test]
    fn enforced_count_is_met() {
        // unsolvable, so the root keeps spawning until the count is reached
        let t = task(&[1, 1, 1, 1], 9);
        let cfg = ExpansionConfig::default().with_promising(0.0);
        for count in [3, 10] {
            let budget = BudgetConfig::default().with_enforced_children(Some(count));
            let out = solve_apr(&t, &cfg, &budget, &Runtime::default());
            assert_eq!(out.trace.child_count(), count);
            assert_eq!(out.status, SolveStatus::NoResult);
        }
    }

    #[test]
    fn child_messages_are_states() {
        let t = task(&[22, 26, 31, 53], 27);
        let cfg = ExpansionConfig::default().with_promising(1.0);
        let out = solve_apr(&t, &cfg, &BudgetConfig::default(), &Runtime::default());
        assert!(out.trace.spawn_count() >= 1);
        for event in &out.trace.root().events {
            if let ThreadEvent::Spawn { children, messages, .. } = event {
                for (id, msg) in children.iter().zip(messages) {
                    assert!(codec::parse_state(msg).is_some());
                    assert_eq!(&out.trace.threads[*id].context, msg);
                }
            }
        }
    }

    #[test]
    fn method_parsing() {
        assert_eq!("sos+".parse::<Method>().unwrap(), Method::SosPlus);
        assert_eq!("APR".parse::<Method>().unwrap(), Method::Apr);
        assert!("bfs".parse::<Method>().is_err());
    }
}
