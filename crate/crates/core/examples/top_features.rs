//! Rank the words most informative of each domain's moral labels by mutual
//! information.
//!
//! ```sh
//! cargo run --release --example top_features -- 8
//! ```

use moralshift::baseline::{features_tsv, top_features};
use moralshift::synth::{generate, Scenario};

pub fn run_example() -> anyhow::Result<()> {
    let top_n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let setup = Scenario::strong_shift().with_docs_per_domain(300).build(1)?;
    let dataset = generate(&setup.specs, &setup.topics, 1)?;
    for domain in dataset.domains() {
        println!("== {domain}");
        print!("{}", features_tsv(&top_features(&dataset, domain, top_n)?));
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run_example()
}
