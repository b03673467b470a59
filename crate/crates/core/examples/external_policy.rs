//! Driving the runtime from a completion endpoint.
//!
//! The transports here are in-process; `HttpTransport::new(url)` speaks the
//! same JSON protocol to a real server.

use apr_lab::external::{CompletionRequest, ExternalPolicy, ReplayTransport, TransportError};
use apr_lab::solvers::SymbolicPolicy;
use apr_lab::{encode, BudgetConfig, ExpansionConfig, Runtime, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = Task::new(vec![22, 26, 31, 53], 27)?;
    let runtime = Runtime::default();
    let budget = BudgetConfig::default().with_enforced_children(Some(10));
    let recorded = SymbolicPolicy::apr(ExpansionConfig::default()).solve(&task, &budget, &runtime).trace;

    // an endpoint that replays the recorded trace yields the same trace
    let replay = ExternalPolicy::new(ReplayTransport::new(&encode(&recorded)?));
    let replayed = runtime.run(&replay, &task, &budget);
    println!("replayed trace identical: {}", replayed == recorded);

    // a child that answers with a broken spawn block fails alone
    let flaky = ExternalPolicy::new(|req: &CompletionRequest| -> Result<String, TransportError> {
        let root = req.context.starts_with("Current State: 27:[22,26,31,53]");
        Ok(match (root, req.context.contains("<JOIN>")) {
            (true, false) => "<SPAWN> [ Current State: 27:[26,27], Operations: [] ] </SPAWN>".into(),
            (true, true) => "No Solution".into(),
            (false, _) => "<SPAWN> oops".into(),
        })
    });
    let trace = runtime.run(&flaky, &task, &budget);
    println!("errors: {:?}", trace.errors.iter().map(|e| e.to_string()).collect::<Vec<_>>());
    println!(
        "root received: {:?}",
        trace.root().events.iter().find_map(|e| match e {
            apr_lab::runtime::ThreadEvent::Spawn { returned, .. } => Some(returned.clone()),
            _ => None,
        })
    );
    Ok(())
}
