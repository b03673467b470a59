//! Group-relative tuning of the APR policy from a rarely spawning start.

use apr_lab::sample_tasks;
use apr_lab::tune::{group_advantages, tune, PolicyParams, TunerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("advantages of [1,0,0,1,1]: {:.4?}", group_advantages(&[1.0, 0.0, 0.0, 1.0, 1.0]));

    let train = sample_tasks(200, 4, 100, 1)?;
    let validation = sample_tasks(100, 4, 100, 2)?;
    let cfg = TunerConfig { steps: 30, eval_every: 10, batch_tasks: 16, ..Default::default() };
    let start = PolicyParams { promising_p: 0.01, ..Default::default() };
    let result = tune(start, &train, &validation, &cfg, 7)?;
    println!("step 0: accuracy {:.2} p {:.3}", result.initial_validation.accuracy, start.promising_p);
    for point in &result.curve {
        println!(
            "step {}: accuracy {:.2} p {:.3} children {:.1} tokens {:.0}",
            point.step, point.validation_accuracy, point.promising_p, point.mean_child_count, point.mean_total_tokens
        );
    }
    println!("tuned: {:?}", result.params);
    Ok(())
}
