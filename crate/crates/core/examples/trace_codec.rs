//! Canonical trace text, token counting and lossless decoding.

use apr_lab::codec::{parse_answer, render_answer};
use apr_lab::solvers::SymbolicPolicy;
use apr_lab::{count_tokens, decode, encode, BudgetConfig, ExpansionConfig, Runtime, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for text in ["", "2+3=5", "<JOIN> FAIL </JOIN>", "Current State: 27:[22,26,31,53], Operations: []"] {
        println!("{:>3} tokens: {text:?}", count_tokens(text));
    }

    let task = Task::new(vec![1, 4, 6, 8], 10)?;
    let cfg = ExpansionConfig::default().with_promising(1.0);
    let outcome = SymbolicPolicy::apr(cfg).solve(&task, &BudgetConfig::default(), &Runtime::default());
    let text = encode(&outcome.trace)?;
    let counts = text.token_count()?;
    println!(
        "{} threads, {} tokens ({} by the runtime)",
        text.threads.len(),
        counts.total,
        outcome.trace.total_tokens()
    );
    assert_eq!(decode(&text)?, outcome.trace.threads);

    let root = &text.threads[0];
    println!("{}\n{}", root.context, root.generated);
    let answer = render_answer(&task, outcome.solution.as_ref());
    println!("answer parses back to {:?}", parse_answer(&answer).flatten().map(|s| s.canonical()));
    Ok(())
}
