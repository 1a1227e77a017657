//! Generate a corpus with planted topic and label shift and score the
//! generator's own Bayes posterior on it.
//!
//! ```sh
//! cargo run --release --example synth_corpus -- 7
//! ```
//!
//! The optional argument is the seed.

use moralshift::baseline::f1_scores;
use moralshift::cli::summary_table;
use moralshift::synth::{generate, BayesOracle, Scenario};

pub fn run_example() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let scenario = Scenario::strong_shift().with_docs_per_domain(300);
    let setup = scenario.build(seed)?;
    let dataset = generate(&setup.specs, &setup.topics, seed)?;

    println!("groups {:?}, topic shift {}, label shift {}\n", scenario.groups, scenario.knobs.topic_shift, scenario.knobs.label_shift);
    print!("{}", summary_table(&dataset));

    let oracle = BayesOracle::new(&setup.specs, &setup.topics);
    println!("\nBayes-optimal macro-F1 per domain:");
    for domain in dataset.domains() {
        let docs: Vec<_> = dataset.domain_documents(domain).collect();
        let gold: Vec<_> = docs.iter().map(|d| d.label).collect();
        let pred = docs.iter().map(|d| oracle.predict(d)).collect::<Result<Vec<_>, _>>()?;
        println!("  {domain}: {:.3}", f1_scores(&gold, &pred).macro_f1);
    }
    let first = &dataset.documents()[0];
    println!("\nfirst document ({}, {}): {}", first.domain, first.label.name(), first.tokens.join(" "));
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run_example()
}
