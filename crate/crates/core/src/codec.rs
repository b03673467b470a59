//! Canonical trace grammar and the lexical token counter.
//!
//! Every thread is a prefix context followed by newline-separated lines:
//!
//! ```text
//! Current State: 27:[22,26,31,53], Operations: []
//! Exploring Operation: 53−31=22
//! Current State: 27:[22,22,26], Operations: [53−31=22]
//! <SPAWN> [ Current State: 27:[4,22], Operations: [53−31=22, 26−22=4] || ... ] </SPAWN>
//! <JOIN> [53−31=22, 26−22=4, 22+4=26] </JOIN>
//! <JOIN> FAIL </JOIN>
//! Answer: ((53−31)+(26−22))... = 27
//! ```
//!
//! A child's last line is its own join. In a parent, the join lines that
//! follow a spawn block are the messages it received.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::countdown::{ArithOp, Operator, Solution, Task};
use crate::runtime::{ThreadEvent, ThreadId, ThreadRecord, Trace};
use crate::search::SearchState;

pub const SPAWN_OPEN: &str = "<SPAWN>";
pub const SPAWN_CLOSE: &str = "</SPAWN>";
pub const JOIN_OPEN: &str = "<JOIN>";
pub const JOIN_CLOSE: &str = "</JOIN>";
pub const FAIL: &str = "FAIL";
pub const MESSAGE_SEPARATOR: &str = " || ";
pub const NO_SOLUTION: &str = "No Solution";

pub const STATE_PREFIX: &str = "Current State: ";
const EXPLORE_PREFIX: &str = "Exploring Operation: ";
pub const ANSWER_PREFIX: &str = "Answer: ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("trace has no root thread")]
    NoRoot,
    #[error("thread {0} is out of id order")]
    IdOrder(ThreadId),
    #[error("thread {0} has an unresolved parent")]
    Parent(ThreadId),
    #[error("thread {thread}: {reason}")]
    Malformed { thread: ThreadId, reason: String },
}

fn is_punct(c: char) -> bool {
    matches!(c, '(' | ')' | '[' | ']' | ',' | ':' | '=' | '+' | '−' | '×' | '÷' | '<' | '>' | '/')
}

/// Number of lexemes after isolating punctuation and splitting on whitespace.
pub fn count_tokens(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if is_punct(c) {
            count += 1;
            in_word = false;
        } else if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            count += 1;
            in_word = true;
        }
    }
    count
}

pub fn contains_marker(text: &str) -> bool {
    [SPAWN_OPEN, SPAWN_CLOSE, JOIN_OPEN, JOIN_CLOSE].iter().any(|m| text.contains(m))
}

pub fn render_ops(ops: &[ArithOp]) -> String {
    let parts: Vec<String> = ops.iter().map(ArithOp::to_string).collect();
    format!("[{}]", parts.join(", "))
}

pub fn render_state(state: &SearchState) -> String {
    let nums: Vec<String> = state.remaining.iter().map(u64::to_string).collect();
    format!("{STATE_PREFIX}{}:[{}], Operations: {}", state.target, nums.join(","), render_ops(&state.path))
}

pub fn render_explore(op: &ArithOp) -> String {
    format!("{EXPLORE_PREFIX}{op}")
}

pub fn render_spawn(messages: &[String]) -> String {
    format!("{SPAWN_OPEN} [ {} ] {SPAWN_CLOSE}", messages.join(MESSAGE_SEPARATOR))
}

pub fn render_join(message: Option<&str>) -> String {
    format!("{JOIN_OPEN} {} {JOIN_CLOSE}", message.unwrap_or(FAIL))
}

pub fn fail_join_tokens() -> usize {
    count_tokens(&render_join(None))
}

/// Infix expression for `sol` over the task's inputs, every compound operand
/// parenthesised.
pub fn render_expression(task: &Task, sol: &Solution) -> String {
    let mut pool: Vec<(u64, String)> = task.inputs.iter().map(|v| (*v, v.to_string())).collect();
    let mut take = |value: u64| match pool.iter().position(|(v, _)| *v == value) {
        Some(i) => pool.remove(i).1,
        None => value.to_string(),
    };
    let mut produced: Vec<(u64, String)> = Vec::new();
    for op in &sol.ops {
        let mut operand = |value: u64| match produced.iter().position(|(v, _)| *v == value) {
            Some(i) => format!("({})", produced.remove(i).1),
            None => take(value),
        };
        let left = operand(op.left);
        let right = operand(op.right);
        produced.push((op.result, format!("{left}{}{right}", op.op.symbol())));
    }
    match produced.pop() {
        Some((_, expr)) => expr,
        None => task.inputs.first().map(u64::to_string).unwrap_or_default(),
    }
}

pub fn render_answer(task: &Task, sol: Option<&Solution>) -> String {
    match sol {
        Some(sol) => format!("{ANSWER_PREFIX}{} = {}", render_expression(task, sol), task.target),
        None => NO_SOLUTION.to_string(),
    }
}

/// Parses `a+b=c` with canonical or ASCII operator symbols.
pub fn parse_op(text: &str) -> Option<ArithOp> {
    let text = text.trim();
    let (lhs, result) = text.split_once('=')?;
    let (idx, sym) = lhs.char_indices().skip(1).find(|(_, c)| Operator::from_symbol(*c).is_some())?;
    let left = lhs[..idx].trim().parse().ok()?;
    let right = lhs[idx + sym.len_utf8()..].trim().parse().ok()?;
    Some(ArithOp { left, right, op: Operator::from_symbol(sym)?, result: result.trim().parse().ok()? })
}

/// Parses `[op, op, ...]`.
pub fn parse_ops(text: &str) -> Option<Vec<ArithOp>> {
    let inner = text.trim().strip_prefix('[')?.strip_suffix(']')?.trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    inner.split(',').map(parse_op).collect()
}

pub fn parse_state(text: &str) -> Option<SearchState> {
    let rest = text.trim().strip_prefix(STATE_PREFIX)?;
    let (target, rest) = rest.split_once(":[")?;
    let (nums, rest) = rest.split_once(']')?;
    let ops = rest.trim().strip_prefix(", Operations:").or_else(|| rest.trim().strip_prefix(",Operations:"))?;
    let mut remaining: Vec<u64> =
        nums.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse().ok()).collect::<Option<_>>()?;
    remaining.sort_unstable();
    Some(SearchState { remaining, target: target.trim().parse().ok()?, path: parse_ops(ops)? })
}

/// Parses an answer line: `Some(Some(sol))`, `Some(None)` for the give-up
/// line, `None` if the line is neither.
pub fn parse_answer(line: &str) -> Option<Option<Solution>> {
    let line = line.trim();
    if line == NO_SOLUTION {
        return Some(None);
    }
    let body = line.strip_prefix(ANSWER_PREFIX)?;
    let expr = match body.rsplit_once('=') {
        Some((expr, _)) => expr,
        None => body,
    };
    parse_expression(expr).map(|ops| Some(Solution::new(ops)))
}

/// Parses an infix expression into ops in evaluation order.
pub fn parse_expression(text: &str) -> Option<Vec<ArithOp>> {
    let mut parser =
        ExprParser { chars: text.chars().filter(|c| !c.is_whitespace()).collect(), pos: 0, ops: Vec::new() };
    parser.expr()?;
    (parser.pos == parser.chars.len()).then_some(parser.ops)
}

struct ExprParser {
    chars: Vec<char>,
    pos: usize,
    ops: Vec<ArithOp>,
}

impl ExprParser {
    fn peek_op(&self, allowed: [Operator; 2]) -> Option<Operator> {
        let op = Operator::from_symbol(*self.chars.get(self.pos)?)?;
        allowed.contains(&op).then_some(op)
    }

    fn combine(&mut self, op: Operator, left: u64, right: u64) -> Option<u64> {
        let arith = ArithOp::new(op, left, right)?;
        self.ops.push(arith);
        Some(arith.result)
    }

    fn expr(&mut self) -> Option<u64> {
        let mut value = self.term()?;
        while let Some(op) = self.peek_op([Operator::Add, Operator::Sub]) {
            self.pos += 1;
            let rhs = self.term()?;
            value = self.combine(op, value, rhs)?;
        }
        Some(value)
    }

    fn term(&mut self) -> Option<u64> {
        let mut value = self.factor()?;
        while let Some(op) = self.peek_op([Operator::Mul, Operator::Div]) {
            self.pos += 1;
            let rhs = self.factor()?;
            value = self.combine(op, value, rhs)?;
        }
        Some(value)
    }

    fn factor(&mut self) -> Option<u64> {
        if self.chars.get(self.pos) == Some(&'(') {
            self.pos += 1;
            let value = self.expr()?;
            if self.chars.get(self.pos) != Some(&')') {
                return None;
            }
            self.pos += 1;
            return Some(value);
        }
        let start = self.pos;
        while self.chars.get(self.pos).is_some_and(char::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        self.chars[start..self.pos].iter().collect::<String>().parse().ok()
    }
}

/// Splits a spawn block into its messages.
pub fn parse_spawn(line: &str) -> Option<Vec<String>> {
    let inner = line
        .trim()
        .strip_prefix(SPAWN_OPEN)?
        .strip_suffix(SPAWN_CLOSE)?
        .trim()
        .strip_prefix('[')?
        .strip_suffix(']')?
        .trim();
    if inner.is_empty() {
        return None;
    }
    Some(inner.split(MESSAGE_SEPARATOR.trim()).map(|m| m.trim().to_string()).collect())
}

/// `Some(None)` for the failure sentinel.
pub fn parse_join(line: &str) -> Option<Option<String>> {
    let inner = line.trim().strip_prefix(JOIN_OPEN)?.strip_suffix(JOIN_CLOSE)?.trim();
    if inner == FAIL {
        Some(None)
    } else {
        Some(Some(inner.to_string()))
    }
}

/// One thread in canonical text form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadText {
    pub id: ThreadId,
    pub parent: Option<ThreadId>,
    pub context: String,
    pub generated: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceText {
    pub threads: Vec<ThreadText>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadTokens {
    pub context: usize,
    pub generated: usize,
    pub received: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub threads: Vec<ThreadTokens>,
    pub total: usize,
}

impl TraceText {
    /// Per-thread counts recomputed from the text alone.
    pub fn token_count(&self) -> Result<TokenCount, CodecError> {
        let records = decode(self)?;
        let threads: Vec<ThreadTokens> = records
            .iter()
            .map(|r| ThreadTokens {
                context: r.context_tokens,
                generated: r.generated_tokens,
                received: r.received_tokens,
            })
            .collect();
        let total = threads.iter().map(|t| t.generated).sum();
        Ok(TokenCount { threads, total })
    }
}

fn check_tree(threads: &[ThreadRecord]) -> Result<(), CodecError> {
    let root = threads.first().ok_or(CodecError::NoRoot)?;
    if root.id != 0 || root.parent.is_some() {
        return Err(CodecError::NoRoot);
    }
    for (idx, thread) in threads.iter().enumerate() {
        if thread.id != idx {
            return Err(CodecError::IdOrder(thread.id));
        }
        if idx > 0 {
            match thread.parent {
                Some(p) if p < idx => {}
                _ => return Err(CodecError::Parent(thread.id)),
            }
        }
    }
    Ok(())
}

/// Renders every thread of a trace.
pub fn encode(trace: &Trace) -> Result<TraceText, CodecError> {
    encode_threads(&trace.threads)
}

pub fn encode_threads(threads: &[ThreadRecord]) -> Result<TraceText, CodecError> {
    check_tree(threads)?;
    let mut out = Vec::with_capacity(threads.len());
    for thread in threads {
        let mut lines: Vec<String> = Vec::new();
        for (pos, event) in thread.events.iter().enumerate() {
            match event {
                ThreadEvent::Step { text, .. } => lines.push(text.clone()),
                ThreadEvent::Spawn { children, messages, returned, .. } => {
                    if children.len() != messages.len() || returned.len() != messages.len() {
                        return Err(CodecError::Malformed { thread: thread.id, reason: "spawn arity mismatch".into() });
                    }
                    for &child in children {
                        if threads.get(child).and_then(|c| c.parent) != Some(thread.id) {
                            return Err(CodecError::Parent(child));
                        }
                    }
                    lines.push(render_spawn(messages));
                    lines.extend(returned.iter().map(|m| render_join(m.as_deref())));
                }
                ThreadEvent::Join { message, .. } => {
                    if thread.parent.is_none() || pos + 1 != thread.events.len() {
                        return Err(CodecError::Malformed { thread: thread.id, reason: "misplaced join".into() });
                    }
                    lines.push(render_join(message.as_deref()));
                }
            }
        }
        out.push(ThreadText {
            id: thread.id,
            parent: thread.parent,
            context: thread.context.clone(),
            generated: lines.join("\n"),
        });
    }
    Ok(TraceText { threads: out })
}

/// Rebuilds the thread tree from its text form.
pub fn decode(text: &TraceText) -> Result<Vec<ThreadRecord>, CodecError> {
    let mut records = Vec::with_capacity(text.threads.len());
    for (idx, thread) in text.threads.iter().enumerate() {
        if thread.id != idx {
            return Err(CodecError::IdOrder(thread.id));
        }
        let malformed = |reason: &str| CodecError::Malformed { thread: thread.id, reason: reason.to_string() };
        let mut children = text.threads.iter().filter(|t| t.parent == Some(thread.id)).map(|t| t.id);
        let lines: Vec<&str> =
            if thread.generated.is_empty() { Vec::new() } else { thread.generated.split('\n').collect() };
        let mut events = Vec::new();
        let (mut generated, mut received) = (0, 0);
        let mut i = 0;
        while i < lines.len() {
            let line = lines[i];
            let tokens = count_tokens(line);
            if line.starts_with(SPAWN_OPEN) {
                let messages = parse_spawn(line).ok_or_else(|| malformed("bad spawn block"))?;
                let ids: Vec<ThreadId> = children.by_ref().take(messages.len()).collect();
                if ids.len() != messages.len() {
                    return Err(malformed("spawn without matching children"));
                }
                let mut returned = Vec::with_capacity(messages.len());
                let mut returned_tokens = 0;
                for k in 0..messages.len() {
                    let join_line = lines.get(i + 1 + k).ok_or_else(|| malformed("missing join"))?;
                    returned.push(parse_join(join_line).ok_or_else(|| malformed("bad join"))?);
                    returned_tokens += count_tokens(join_line);
                }
                generated += tokens;
                received += returned_tokens;
                i += 1 + returned.len();
                events.push(ThreadEvent::Spawn { children: ids, messages, tokens, returned, returned_tokens });
                continue;
            }
            if line.starts_with(JOIN_OPEN) {
                if thread.parent.is_none() || i + 1 != lines.len() {
                    return Err(malformed("misplaced join"));
                }
                let message = parse_join(line).ok_or_else(|| malformed("bad join"))?;
                generated += tokens;
                events.push(ThreadEvent::Join { message, tokens });
            } else {
                generated += tokens;
                events.push(ThreadEvent::Step { text: line.to_string(), tokens });
            }
            i += 1;
        }
        if children.next().is_some() {
            return Err(malformed("child never spawned"));
        }
        records.push(ThreadRecord {
            id: thread.id,
            parent: thread.parent,
            context_tokens: count_tokens(&thread.context),
            context: thread.context.clone(),
            generated_tokens: generated,
            received_tokens: received,
            events,
        });
    }
    check_tree(&records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_counting_rules() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("2+3=5"), 5);
        assert_eq!(count_tokens("  hello   world "), 2);
        assert_eq!(count_tokens("<JOIN> FAIL </JOIN>"), 8);
        assert_eq!(count_tokens("a||b"), 1);
        let (a, b) = ("Current State: 10:[1,4]", "Exploring Operation: 4−1=3");
        assert_eq!(count_tokens(&format!("{a} {b}")), count_tokens(a) + count_tokens(b));
    }

    #[test]
    fn state_round_trip() {
        let task = Task::new(vec![22, 26, 31, 53], 27).unwrap();
        let start = SearchState::start(&task);
        let text = render_state(&start);
        assert_eq!(text, "Current State: 27:[22,26,31,53], Operations: []");
        assert_eq!(parse_state(&text), Some(start.clone()));
        let op = ArithOp::new(Operator::Sub, 53, 31).unwrap();
        let next = start.apply(op).unwrap();
        let text = render_state(&next);
        assert_eq!(text, "Current State: 27:[22,22,26], Operations: [53−31=22]");
        assert_eq!(parse_state(&text), Some(next));
    }

    #[test]
    fn answer_expression() {
        let task = Task::new(vec![1, 4, 6, 8], 10).unwrap();
        let ops = vec![
            ArithOp::new(Operator::Sub, 8, 6).unwrap(),
            ArithOp::new(Operator::Add, 4, 1).unwrap(),
            ArithOp::new(Operator::Mul, 2, 5).unwrap(),
        ];
        let sol = Solution::new(ops.clone());
        let line = render_answer(&task, Some(&sol));
        assert_eq!(line, "Answer: (8−6)×(4+1) = 10");
        assert_eq!(parse_answer(&line), Some(Some(sol)));
        assert_eq!(render_answer(&Task::new(vec![10], 10).unwrap(), Some(&Solution::default())), "Answer: 10 = 10");
        assert_eq!(parse_answer("Answer: 10 = 10"), Some(Some(Solution::default())));
        assert_eq!(parse_answer(NO_SOLUTION), Some(None));
        assert_eq!(parse_answer("Answer: 8-6+4*1 = 6").unwrap().unwrap().ops.len(), 3);
        assert_eq!(parse_answer("Answer: (8−6 = 2"), None);
    }

    #[test]
    fn spawn_and_join_blocks() {
        let msgs = vec!["Current State: 7:[3,4], Operations: []".to_string(), "b".to_string()];
        let block = render_spawn(&msgs);
        assert_eq!(block, "<SPAWN> [ Current State: 7:[3,4], Operations: [] || b ] </SPAWN>");
        assert_eq!(parse_spawn(&block), Some(msgs));
        assert_eq!(parse_join("<JOIN> FAIL </JOIN>"), Some(None));
        assert_eq!(parse_join("<JOIN> [4+3=7] </JOIN>"), Some(Some("[4+3=7]".into())));
        assert!(parse_spawn("<SPAWN> [  ] </SPAWN>").is_none());
        assert!(contains_marker("foo </SPAWN>"));
    }

    #[test]
    fn decode_rejects_orphans() {
        let text = TraceText {
            threads: vec![
                ThreadText { id: 0, parent: None, context: "c".into(), generated: "x".into() },
                ThreadText { id: 1, parent: Some(0), context: "m".into(), generated: "<JOIN> FAIL </JOIN>".into() },
            ],
        };
        assert!(matches!(decode(&text), Err(CodecError::Malformed { thread: 0, .. })));
    }
}
