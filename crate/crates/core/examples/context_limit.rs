//! 27 from {22, 26, 31, 53}: the serialized search runs out of context, the
//! parallel search hands subtrees to children and finds the answer.

use apr_lab::solvers::SymbolicPolicy;
use apr_lab::{encode, BudgetConfig, ExpansionConfig, Runtime, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = Task::new(vec![22, 26, 31, 53], 27)?;
    let runtime = Runtime::default();
    let cfg = ExpansionConfig::default();

    for cap in [1024, 4096] {
        let budget = BudgetConfig::default().with_cap(cap);
        let sos = SymbolicPolicy::sos_plus(cfg).solve(&task, &budget, &runtime);
        let apr = SymbolicPolicy::apr(cfg).solve(&task, &budget.with_enforced_children(Some(10)), &runtime);
        println!(
            "cap {cap}: SoS+ {} ({} tokens) | APR {} ({} children, {} total, {} sequential)",
            sos.status.as_str(),
            sos.trace.total_tokens(),
            apr.status.as_str(),
            apr.trace.child_count(),
            apr.trace.total_tokens(),
            apr.trace.sequential_tokens(),
        );
    }

    let budget = BudgetConfig::default().with_enforced_children(Some(10));
    let apr = SymbolicPolicy::apr(cfg).solve(&task, &budget, &runtime);
    let text = encode(&apr.trace)?;
    for thread in &text.threads {
        let lines: Vec<&str> = thread.generated.lines().collect();
        println!("\n-- thread {} (parent {:?}), {} lines", thread.id, thread.parent, lines.len());
        println!("{}", thread.context);
        for line in lines.iter().rev().take(3).rev() {
            println!("{line}");
        }
    }
    Ok(())
}
