//! Demonstration corpus with length-bin and child-count conditioning.

use apr_lab::corpus::{generate_corpus, read_corpus, rejection_filter, write_corpus};
use apr_lab::solvers::SymbolicPolicy;
use apr_lab::{BudgetConfig, ExpansionConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("apr-lab-corpus-example");
    std::fs::create_dir_all(&dir)?;
    let budget = BudgetConfig::default();
    for policy in
        [SymbolicPolicy::sos_plus(ExpansionConfig::default()), SymbolicPolicy::apr(ExpansionConfig::default())]
    {
        let records = generate_corpus(50, 4, &policy, &budget, 3)?;
        let kept = rejection_filter(&records)?;
        let path = dir.join(format!("{}.jsonl", policy.method).replace('+', "plus"));
        write_corpus(&path, &records)?;
        assert_eq!(read_corpus(&path)?, records);
        let first = &records[0];
        println!(
            "{}: {} records, {} kept; first tag {:?}={} with {} tokens -> {}",
            policy.method,
            records.len(),
            kept.len(),
            first.condition.kind,
            first.condition.value,
            first.total_tokens()?,
            path.display()
        );
    }
    Ok(())
}
