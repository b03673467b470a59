//! A scripted policy on the spawn/join runtime, and the latency model.

use std::collections::BTreeMap;
use std::time::Duration;

use apr_lab::runtime::{makespan, simulate_latency, Action, ScriptedPolicy};
use apr_lab::{count_tokens, BudgetConfig, Runtime, Task, WorkerPool};

/// A line of `n` one-token words.
fn filler(n: usize) -> String {
    vec!["w"; n].join(" ")
}

fn main() {
    let (a, b) = ("Current State: 5:[2,3], Operations: []", "Current State: 5:[5], Operations: [2+3=5]");
    let spawn_tokens = count_tokens(&format!("<SPAWN> [ {a} || {b} ] </SPAWN>"));
    let join_tokens = count_tokens("<JOIN> ok </JOIN>");

    let give_up = count_tokens("No Solution");

    // parent 100 tokens before the join barrier and 20 after; children 50 and 80
    let policy = ScriptedPolicy {
        root: vec![
            Action::Emit(filler(100 - spawn_tokens)),
            Action::Spawn(vec![a.into(), b.into()]),
            Action::Emit(filler(20 - give_up)),
            Action::Answer(None),
        ],
        children: BTreeMap::from([
            (a.to_string(), vec![Action::Emit(filler(50 - join_tokens)), Action::Join(Some("ok".into()))]),
            (b.to_string(), vec![Action::Emit(filler(80 - join_tokens)), Action::Join(Some("ok".into()))]),
        ]),
    };
    let task = Task::new(vec![2, 3], 5).expect("valid task");
    let budget = BudgetConfig::unbounded();
    let trace = Runtime::default().run(&policy, &task, &budget);
    println!("total {} sequential {}", trace.total_tokens(), trace.sequential_tokens());

    let ms = Duration::from_millis;
    println!("makespan [5,5,5] on 2 workers: {:?}", makespan(&[ms(5), ms(5), ms(5)], 2));
    for workers in [1, 2, 7] {
        let pool = WorkerPool::new(workers, ms(1), ms(10));
        println!("W={workers}: latency {:?}", simulate_latency(&trace, &pool));
    }
}
