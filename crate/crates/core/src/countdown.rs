//! Countdown tasks, arithmetic legality and solution checking.
//!
//! Intermediate values are restricted to integers `>= 1`: subtraction is only
//! legal when it stays positive and division only when it is exact.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest input count the oracle will enumerate.
pub const ORACLE_MAX_INPUTS: usize = 6;

/// Inclusive range input numbers are drawn from when sampling tasks.
pub const SAMPLE_INPUT_RANGE: (u64, u64) = (1, 99);

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task has no input numbers")]
    Empty,
    #[error("task numbers must be >= 1")]
    NonPositive,
    #[error("oracle refuses {0} inputs (limit {ORACLE_MAX_INPUTS})")]
    TooManyInputs(usize),
    #[error("sample count must be >= 1")]
    ZeroSamples,
    #[error("gave up after {attempts} attempts with {found} of {wanted} solvable tasks")]
    AttemptsExhausted { attempts: usize, found: usize, wanted: usize },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A Countdown instance: use every input exactly once to reach `target`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub inputs: Vec<u64>,
    pub target: u64,
}

impl Task {
    pub fn new(inputs: Vec<u64>, target: u64) -> Result<Self, TaskError> {
        let task = Task { inputs, target };
        task.check()?;
        Ok(task)
    }

    pub fn check(&self) -> Result<(), TaskError> {
        if self.inputs.is_empty() {
            return Err(TaskError::Empty);
        }
        if self.target == 0 || self.inputs.contains(&0) {
            return Err(TaskError::NonPositive);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
}

impl Operator {
    pub const ALL: [Operator; 4] = [Operator::Add, Operator::Sub, Operator::Mul, Operator::Div];

    pub fn symbol(self) -> char {
        match self {
            Operator::Add => '+',
            Operator::Sub => '−',
            Operator::Mul => '×',
            Operator::Div => '÷',
        }
    }

    /// Accepts the canonical symbols plus their ASCII stand-ins.
    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '+' => Some(Operator::Add),
            '−' | '-' => Some(Operator::Sub),
            '×' | '*' | 'x' => Some(Operator::Mul),
            '÷' | '/' => Some(Operator::Div),
            _ => None,
        }
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Operator::Add | Operator::Mul)
    }

    /// Applies the operator under the positive-integer closure.
    pub fn apply(self, left: u64, right: u64) -> Option<u64> {
        let value = match self {
            Operator::Add => left.checked_add(right)?,
            Operator::Sub => left.checked_sub(right)?,
            Operator::Mul => left.checked_mul(right)?,
            Operator::Div => {
                if right == 0 || !left.is_multiple_of(right) {
                    return None;
                }
                left / right
            }
        };
        (value >= 1).then_some(value)
    }
}

/// One arithmetic step `left op right = result`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArithOp {
    pub left: u64,
    pub right: u64,
    pub op: Operator,
    pub result: u64,
}

impl ArithOp {
    /// Builds a legal op, or `None` when the closure rejects it.
    pub fn new(op: Operator, left: u64, right: u64) -> Option<Self> {
        if left == 0 || right == 0 {
            return None;
        }
        op.apply(left, right).map(|result| ArithOp { left, right, op, result })
    }

    pub fn is_consistent(&self) -> bool {
        self.left >= 1 && self.right >= 1 && self.op.apply(self.left, self.right) == Some(self.result)
    }

    /// Same op with the larger operand first for `+` and `×`.
    pub fn normalized(&self) -> Self {
        let mut op = *self;
        if op.op.is_commutative() && op.left < op.right {
            std::mem::swap(&mut op.left, &mut op.right);
        }
        op
    }
}

impl fmt::Display for ArithOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}={}", self.left, self.op.symbol(), self.right, self.result)
    }
}

/// Ordered list of ops that reduces the inputs to the target.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Solution {
    pub ops: Vec<ArithOp>,
}

impl Solution {
    pub fn new(ops: Vec<ArithOp>) -> Self {
        Solution { ops }
    }

    /// Canonical string used for voting: execution order, commutative
    /// operands normalized.
    pub fn canonical(&self) -> String {
        self.ops.iter().map(|op| op.normalized().to_string()).collect::<Vec<_>>().join(", ")
    }
}

/// Removes one occurrence of `value` from `pool`.
pub(crate) fn take(pool: &mut Vec<u64>, value: u64) -> bool {
    match pool.iter().position(|&v| v == value) {
        Some(idx) => {
            pool.swap_remove(idx);
            true
        }
        None => false,
    }
}

/// True iff `sol` consumes every input exactly once and ends at the target.
pub fn validate_solution(task: &Task, sol: &Solution) -> bool {
    if task.check().is_err() {
        return false;
    }
    let mut pool = task.inputs.clone();
    for op in &sol.ops {
        if !op.is_consistent() {
            return false;
        }
        if !take(&mut pool, op.left) || !take(&mut pool, op.right) {
            return false;
        }
        pool.push(op.result);
    }
    pool.len() == 1 && pool[0] == task.target
}

/// Every distinct legal op over the multiset, larger operand first.
pub(crate) fn legal_ops(numbers: &[u64]) -> Vec<ArithOp> {
    let mut seen = HashSet::new();
    let mut ops = Vec::new();
    for i in 0..numbers.len() {
        for j in (i + 1)..numbers.len() {
            let (a, b) = if numbers[i] >= numbers[j] { (numbers[i], numbers[j]) } else { (numbers[j], numbers[i]) };
            for op in Operator::ALL {
                if let Some(arith) = ArithOp::new(op, a, b) {
                    if seen.insert(arith) {
                        ops.push(arith);
                    }
                }
            }
        }
    }
    ops
}

/// Exhaustive search over every operation tree.
///
/// Returns a witness when the task is solvable. Failed multisets are memoised
/// on their sorted form, so the verdict does not depend on visiting order.
pub fn oracle_solvable(task: &Task) -> Result<Option<Solution>, TaskError> {
    task.check()?;
    if task.inputs.len() > ORACLE_MAX_INPUTS {
        return Err(TaskError::TooManyInputs(task.inputs.len()));
    }
    let mut numbers = task.inputs.clone();
    numbers.sort_unstable();
    let mut dead = HashSet::new();
    let mut path = Vec::new();
    if oracle_rec(&numbers, task.target, &mut dead, &mut path) {
        Ok(Some(Solution::new(path)))
    } else {
        Ok(None)
    }
}

fn oracle_rec(numbers: &[u64], target: u64, dead: &mut HashSet<Vec<u64>>, path: &mut Vec<ArithOp>) -> bool {
    if numbers.len() == 1 {
        return numbers[0] == target;
    }
    if dead.contains(numbers) {
        return false;
    }
    for op in legal_ops(numbers) {
        let mut next = numbers.to_vec();
        take(&mut next, op.left);
        take(&mut next, op.right);
        next.push(op.result);
        next.sort_unstable();
        path.push(op);
        if oracle_rec(&next, target, dead, path) {
            return true;
        }
        path.pop();
    }
    dead.insert(numbers.to_vec());
    false
}

/// Seeded rejection sampler for solvable tasks.
#[derive(Debug, Clone)]
pub struct TaskSampler {
    pub num_inputs: usize,
    pub max_target: u64,
    pub max_attempts: usize,
}

impl TaskSampler {
    pub fn new(num_inputs: usize, max_target: u64) -> Self {
        TaskSampler { num_inputs, max_target, max_attempts: 1_000_000 }
    }

    pub fn with_max_attempts(mut self, max_attempts: usize) -> Self {
        self.max_attempts = max_attempts;
        self
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Task>, TaskError> {
        if n == 0 {
            return Err(TaskError::ZeroSamples);
        }
        if self.num_inputs == 0 || self.max_target == 0 {
            return Err(TaskError::Empty);
        }
        if self.num_inputs > ORACLE_MAX_INPUTS {
            return Err(TaskError::TooManyInputs(self.num_inputs));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tasks = Vec::with_capacity(n);
        let mut attempts = 0;
        while tasks.len() < n {
            if attempts >= self.max_attempts {
                return Err(TaskError::AttemptsExhausted { attempts, found: tasks.len(), wanted: n });
            }
            attempts += 1;
            let inputs: Vec<u64> =
                (0..self.num_inputs).map(|_| rng.gen_range(SAMPLE_INPUT_RANGE.0..=SAMPLE_INPUT_RANGE.1)).collect();
            let target = rng.gen_range(1..=self.max_target);
            let task = Task { inputs, target };
            if oracle_solvable(&task)?.is_some() {
                tasks.push(task);
            }
        }
        Ok(tasks)
    }
}

/// `n` solvable tasks with `num_inputs` numbers each, deterministic in `seed`.
pub fn sample_tasks(n: usize, num_inputs: usize, max_target: u64, seed: u64) -> Result<Vec<Task>, TaskError> {
    TaskSampler::new(num_inputs, max_target).sample(n, seed)
}

/// Reads a task file: one JSON object per line, blank lines ignored.
pub fn read_tasks(path: &Path) -> Result<Vec<Task>, TaskError> {
    let file = fs::File::open(path)?;
    let mut tasks = Vec::new();
    for (idx, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let task: Task = serde_json::from_str(&line).map_err(|source| TaskError::Parse { line: idx + 1, source })?;
        task.check()?;
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn write_tasks(path: &Path, tasks: &[Task]) -> Result<(), TaskError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for task in tasks {
        serde_json::to_writer(&mut out, task).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(left: u64, sym: char, right: u64, result: u64) -> ArithOp {
        ArithOp { left, right, op: Operator::from_symbol(sym).unwrap(), result }
    }

    #[test]
    fn worked_example_validates() {
        let task = Task::new(vec![1, 4, 6, 8], 10).unwrap();
        let sol = Solution::new(vec![op(8, '-', 6, 2), op(4, '+', 1, 5), op(2, '*', 5, 10)]);
        assert!(validate_solution(&task, &sol));
    }

    #[test]
    fn zero_op_identity() {
        let task = Task::new(vec![10], 10).unwrap();
        assert!(validate_solution(&task, &Solution::default()));
        let task = Task::new(vec![10], 9).unwrap();
        assert!(!validate_solution(&task, &Solution::default()));
    }

    #[test]
    fn unused_input_rejected() {
        let task = Task::new(vec![1, 4, 6, 8], 10).unwrap();
        let sol = Solution::new(vec![op(8, '+', 6, 14), op(14, '-', 4, 10)]);
        assert!(!validate_solution(&task, &sol));
    }

    #[test]
    fn malformed_ops_rejected() {
        let task = Task::new(vec![3, 5], 2).unwrap();
        // wrong arithmetic
        assert!(!validate_solution(&task, &Solution::new(vec![op(5, '-', 3, 3)])));
        // non-positive result
        assert!(!validate_solution(&task, &Solution::new(vec![op(3, '-', 5, 0)])));
        // operand not available
        assert!(!validate_solution(&task, &Solution::new(vec![op(7, '-', 5, 2)])));
        // inexact division
        let task = Task::new(vec![7, 2], 3).unwrap();
        assert!(!validate_solution(&task, &Solution::new(vec![op(7, '/', 2, 3)])));
        // reuse of a single copy
        let task = Task::new(vec![4, 5], 8).unwrap();
        assert!(!validate_solution(&task, &Solution::new(vec![op(4, '+', 4, 8)])));
    }

    #[test]
    fn commutative_order_accepted() {
        let task = Task::new(vec![1, 4], 5).unwrap();
        assert!(validate_solution(&task, &Solution::new(vec![op(1, '+', 4, 5)])));
    }

    #[test]
    fn oracle_examples() {
        let task = Task::new(vec![1, 4, 6, 8], 10).unwrap();
        let witness = oracle_solvable(&task).unwrap().expect("solvable");
        assert!(validate_solution(&task, &witness));

        let task = Task::new(vec![7], 7).unwrap();
        assert_eq!(oracle_solvable(&task).unwrap(), Some(Solution::default()));

        let task = Task::new(vec![1, 1, 1, 1], 9).unwrap();
        assert_eq!(oracle_solvable(&task).unwrap(), None);
    }

    #[test]
    fn oracle_rejects_oversized() {
        let task = Task::new(vec![1; 7], 7).unwrap();
        assert!(matches!(oracle_solvable(&task), Err(TaskError::TooManyInputs(7))));
    }

    #[test]
    fn task_invariants() {
        assert!(matches!(Task::new(vec![], 3), Err(TaskError::Empty)));
        assert!(matches!(Task::new(vec![0, 2], 3), Err(TaskError::NonPositive)));
        assert!(matches!(Task::new(vec![1, 2], 0), Err(TaskError::NonPositive)));
    }

    #[test]
    fn sampler_is_seeded_and_solvable() {
        let a = sample_tasks(3, 4, 100, 7).unwrap();
        let b = sample_tasks(3, 4, 100, 7).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for task in &a {
            assert_eq!(task.inputs.len(), 4);
            assert!(task.target <= 100);
            assert!(oracle_solvable(task).unwrap().is_some());
        }
        let five = sample_tasks(1, 5, 100, 1).unwrap();
        assert_eq!(five[0].inputs.len(), 5);
    }

    #[test]
    fn sampler_errors() {
        assert!(matches!(sample_tasks(0, 4, 100, 1), Err(TaskError::ZeroSamples)));
        // a single input equal to the target is rare; a 1-attempt cap trips quickly
        let sampler = TaskSampler::new(1, 100).with_max_attempts(1);
        let err = (0..50).find_map(|seed| sampler.sample(5, seed).err());
        assert!(matches!(err, Some(TaskError::AttemptsExhausted { .. })));
    }

    #[test]
    fn legal_ops_dedup_and_closure() {
        let ops = legal_ops(&[2, 2]);
        let rendered: Vec<String> = ops.iter().map(|o| o.to_string()).collect();
        assert_eq!(rendered, vec!["2+2=4", "2×2=4", "2÷2=1"]);
        for op in legal_ops(&[3, 7, 12, 12]) {
            assert!(op.is_consistent());
            assert!(op.left >= op.right);
        }
    }
}
