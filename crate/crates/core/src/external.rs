//! Drives the runtime from a completion endpoint.
//!
//! Each thread sends its transcript and receives text; the adapter turns the
//! text into runtime actions line by line. Spawn and join blocks use the codec
//! grammar, the root finishes with an `Answer:` or `No Solution` line. Any
//! failure turns into a protocol error on that thread, so a failing child
//! still hands its parent the failure join and the run continues.

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, TraceText, JOIN_OPEN, SPAWN_OPEN};
use crate::countdown::Task;
use crate::runtime::{Action, Policy, ThreadPolicy, ThreadView};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub context: String,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub completion: String,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("bad response: {0}")]
    Response(String),
}

pub trait Transport: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError>;
}

/// JSON over HTTP POST.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    pub endpoint: String,
    pub timeout: Duration,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpTransport { endpoint: endpoint.into(), timeout: Duration::from_secs(60) }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        let response = ureq::post(&self.endpoint)
            .timeout(self.timeout)
            .send_json(request)
            .map_err(|e| TransportError::Request(e.to_string()))?;
        let body: CompletionResponse = response.into_json().map_err(|e| TransportError::Response(e.to_string()))?;
        Ok(body.completion)
    }
}

impl<F> Transport for F
where
    F: Fn(&CompletionRequest) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        self(request)
    }
}

/// Serves the continuations of a recorded trace.
///
/// A request whose context is a prefix of some thread's full text gets the
/// following lines up to and including the next spawn block, or the rest of
/// the thread. Runs cut by the context cap cannot be replayed exactly: the
/// line that did not fit is not part of the trace.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    threads: Vec<String>,
}

impl ReplayTransport {
    pub fn new(text: &TraceText) -> Self {
        let threads = text
            .threads
            .iter()
            .map(|t| if t.generated.is_empty() { t.context.clone() } else { format!("{}\n{}", t.context, t.generated) })
            .collect();
        ReplayTransport { threads }
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, request: &CompletionRequest) -> Result<String, TransportError> {
        let ctx = &request.context;
        let rest = self
            .threads
            .iter()
            .filter_map(|full| full.strip_prefix(ctx.as_str()))
            .find_map(|rest| rest.strip_prefix('\n'))
            .ok_or_else(|| TransportError::Response("no recorded continuation".into()))?;
        let mut out = Vec::new();
        for line in rest.split('\n') {
            out.push(line);
            if line.starts_with(SPAWN_OPEN) {
                break;
            }
        }
        Ok(out.join("\n"))
    }
}

/// Maps one completion line to an action.
pub fn parse_line(line: &str, is_root: bool) -> Action {
    if line.starts_with(SPAWN_OPEN) {
        return match codec::parse_spawn(line) {
            Some(messages) => Action::Spawn(messages),
            None => Action::Fail(format!("malformed spawn block: {line:?}")),
        };
    }
    if line.starts_with(JOIN_OPEN) {
        return match codec::parse_join(line) {
            Some(message) => Action::Join(message),
            None => Action::Fail(format!("malformed join block: {line:?}")),
        };
    }
    if is_root {
        if let Some(answer) = codec::parse_answer(line) {
            return Action::Answer(answer);
        }
        if line.starts_with(codec::ANSWER_PREFIX) {
            return Action::Fail(format!("unparseable answer: {line:?}"));
        }
    }
    Action::Emit(line.to_string())
}

/// A [`Policy`] backed by a completion endpoint.
pub struct ExternalPolicy<T> {
    transport: T,
}

impl<T: Transport> ExternalPolicy<T> {
    pub fn new(transport: T) -> Self {
        ExternalPolicy { transport }
    }
}

impl<T: Transport> Policy for ExternalPolicy<T> {
    fn root(&self, _task: &Task) -> Box<dyn ThreadPolicy + '_> {
        Box::new(ExternalThread { transport: &self.transport, queue: VecDeque::new() })
    }

    fn child(&self, _message: &str) -> Result<Box<dyn ThreadPolicy + '_>, String> {
        Ok(Box::new(ExternalThread { transport: &self.transport, queue: VecDeque::new() }))
    }
}

struct ExternalThread<'a, T> {
    transport: &'a T,
    queue: VecDeque<String>,
}

impl<T: Transport> ThreadPolicy for ExternalThread<'_, T> {
    fn next(&mut self, view: &ThreadView<'_>) -> Action {
        if view.joined.is_some() {
            // the completion was cut at the spawn block; anything queued predates the joins
            self.queue.clear();
        }
        if self.queue.is_empty() {
            let request = CompletionRequest {
                context: view.transcript.to_string(),
                max_tokens: view.cap_tokens.saturating_sub(view.used_tokens),
            };
            let completion = match self.transport.complete(&request) {
                Ok(text) => text,
                Err(e) => return Action::Fail(format!("transport: {e}")),
            };
            self.queue.extend(completion.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string));
            if self.queue.is_empty() {
                return Action::Fail("empty completion".into());
            }
        }
        let line = self.queue.pop_front().unwrap_or_default();
        let action = parse_line(&line, view.is_root);
        if matches!(action, Action::Spawn(_)) {
            self.queue.clear();
        }
        action
    }
}
