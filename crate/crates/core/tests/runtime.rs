use std::collections::BTreeMap;
use std::time::Duration;

use apr_lab::runtime::{simulate_latency, Action, RunStatus, ScriptedPolicy, ThreadEvent, ThreadStatus};
use apr_lab::solvers::SymbolicPolicy;
use apr_lab::{count_tokens, encode, sample_tasks, BudgetConfig, ExpansionConfig, Runtime, Task, WorkerPool};

const A: &str = "Current State: 5:[2,3], Operations: []";
const B: &str = "Current State: 5:[5], Operations: [2+3=5]";

fn filler(n: usize) -> String {
    vec!["w"; n].join(" ")
}

/// Parent 100 tokens, two children of 50 and 80, parent 20 more.
fn scripted() -> ScriptedPolicy {
    let spawn = count_tokens(&format!("<SPAWN> [ {A} || {B} ] </SPAWN>"));
    let join = count_tokens("<JOIN> ok </JOIN>");
    let answer = count_tokens("No Solution");
    ScriptedPolicy {
        root: vec![
            Action::Emit(filler(100 - spawn)),
            Action::Spawn(vec![A.into(), B.into()]),
            Action::Emit(filler(20 - answer)),
            Action::Answer(None),
        ],
        children: BTreeMap::from([
            (A.to_string(), vec![Action::Emit(filler(50 - join)), Action::Join(Some("ok".into()))]),
            (B.to_string(), vec![Action::Emit(filler(80 - join)), Action::Join(Some("ok".into()))]),
        ]),
    }
}

fn task() -> Task {
    Task::new(vec![2, 3], 5).unwrap()
}

#[test]
fn scripted_counts() {
    let trace = Runtime::default().run(&scripted(), &task(), &BudgetConfig::unbounded());
    assert_eq!(trace.total_tokens(), 250);
    assert_eq!(trace.sequential_tokens(), 200);
    assert_eq!(trace.child_count(), 2);
    assert_eq!(trace.spawn_count(), 1);
    assert_eq!(trace.outcome, RunStatus::NoResult);
    let encoded = encode(&trace).unwrap();
    assert_eq!(encoded.token_count().unwrap().total, 250);
}

#[test]
fn scripted_runs_are_identical() {
    for runtime in [Runtime::default(), Runtime::sequential(WorkerPool::default())] {
        let first = runtime.run(&scripted(), &task(), &BudgetConfig::unbounded());
        let second = runtime.run(&scripted(), &task(), &BudgetConfig::unbounded());
        assert_eq!(first, second);
    }
}

#[test]
fn latency_bounds_on_scripted_trace() {
    let trace = Runtime::default().run(&scripted(), &task(), &BudgetConfig::unbounded());
    let ms = Duration::from_millis;
    let wide = WorkerPool::new(2, ms(3), ms(50));
    assert_eq!(simulate_latency(&trace, &wide), ms(200 * 3 + 50));
    let serial = WorkerPool::new(1, ms(3), ms(50));
    assert_eq!(simulate_latency(&trace, &serial), ms(250 * 3 + 50));
    let huge = WorkerPool::new(64, ms(3), ms(50));
    assert_eq!(simulate_latency(&trace, &huge), simulate_latency(&trace, &wide));
}

#[test]
fn join_barrier_and_isolation() {
    let tasks = sample_tasks(30, 4, 100, 8).unwrap();
    let policy = SymbolicPolicy::apr(ExpansionConfig::default().with_promising(0.5));
    for t in &tasks {
        let trace = policy.solve(t, &BudgetConfig::default(), &Runtime::default()).trace;
        let root = trace.root();
        for event in &root.events {
            if let ThreadEvent::Spawn { children, messages, returned, .. } = event {
                assert_eq!(children.len(), returned.len());
                for (id, msg) in children.iter().zip(messages) {
                    let child = &trace.threads[*id];
                    // a child sees only its message
                    assert_eq!(&child.context, msg);
                    assert_eq!(child.parent, Some(0));
                    assert!(matches!(child.events.last(), Some(ThreadEvent::Join { .. })));
                    assert!(child.events.iter().all(|e| !matches!(e, ThreadEvent::Spawn { .. })));
                }
            }
        }
        for (thread, status) in trace.threads.iter().zip(&trace.status) {
            assert!(thread.window_tokens() <= 4096 || *status != ThreadStatus::Finished);
            assert!(thread.window_tokens() <= 4096);
        }
    }
}

#[test]
fn child_overflow_fails_only_that_child() {
    let long = filler(100);
    let policy = ScriptedPolicy {
        root: vec![Action::Spawn(vec![A.into(), B.into()]), Action::Emit("after".into()), Action::Answer(None)],
        children: BTreeMap::from([
            (A.to_string(), vec![Action::Emit(long.clone()), Action::Emit(long), Action::Join(Some("x".into()))]),
            (B.to_string(), vec![Action::Join(Some("ok".into()))]),
        ]),
    };
    let trace = Runtime::default().run(&policy, &task(), &BudgetConfig::default().with_cap(150));
    assert_eq!(trace.status[1], ThreadStatus::BudgetExhausted);
    assert_eq!(trace.status[2], ThreadStatus::Finished);
    match &trace.root().events[0] {
        ThreadEvent::Spawn { returned, .. } => assert_eq!(returned, &vec![None, Some("ok".to_string())]),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(trace.outcome, RunStatus::NoResult);
}
