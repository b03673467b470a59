//! pass@n, cons@n, cumulative accuracy and the four CSV curves.

use apr_lab::metrics::{compute_curves, cumulative_accuracy, CurveGrid, EvalConfig, EvalReport, OutcomeMatrix};
use apr_lab::solvers::SymbolicPolicy;
use apr_lab::{sample_tasks, BudgetConfig, ExpansionConfig, Runtime};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tasks = sample_tasks(100, 4, 100, 21)?;
    let runtime = Runtime::default();
    let cfg = ExpansionConfig::default();
    let budget = BudgetConfig::default();
    let configs = vec![
        EvalConfig { label: "sos+".into(), policy: SymbolicPolicy::sos_plus(cfg), budget },
        EvalConfig {
            label: "apr(10)".into(),
            policy: SymbolicPolicy::apr(cfg),
            budget: budget.with_enforced_children(Some(10)),
        },
    ];
    let report = EvalReport::evaluate(&tasks, &configs, &runtime, 21)?;
    for agg in report.aggregates() {
        println!(
            "{:8} acc {:.2} total {:6.0} sequential {:6.0} children {:.1} latency {:.0} ms",
            agg.config,
            agg.accuracy,
            agg.mean_total_tokens,
            agg.mean_sequential_tokens,
            agg.mean_child_count,
            agg.mean_latency_ms
        );
    }
    for ((_, config), rows) in report.groups() {
        println!("{config:8} cumulative {:?}", cumulative_accuracy(&rows, &[1024, 2048, 4096]));
    }

    let matrix = OutcomeMatrix::sample(&tasks, &configs[0].policy, &budget, &runtime, 4, 5)?;
    for n in 1..=4 {
        println!("n={n} pass {:.2} cons {:.2}", matrix.pass_at_n(n), matrix.cons_at_n(n));
    }

    let dir = std::env::temp_dir().join("apr-lab-eval-example");
    std::fs::create_dir_all(&dir)?;
    for path in compute_curves(&report, &CurveGrid::default(), &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
