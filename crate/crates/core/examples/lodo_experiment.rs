//! Run the leave-one-domain-out comparison of In-Domain, No-adapt and Adapt
//! and print the report.
//!
//! ```sh
//! cargo run --release --example lodo_experiment -- dom2
//! ```

use moralshift::eval::{run_experiment, ExperimentConfig};
use moralshift::synth::{generate, Scenario};

pub fn run_example() -> anyhow::Result<()> {
    let target = std::env::args().nth(1).unwrap_or_else(|| "dom0".to_string());
    let mut scenario = Scenario::strong_shift().with_docs_per_domain(120);
    scenario.vocab_size = 300;
    let setup = scenario.build(0)?;
    let dataset = generate(&setup.specs, &setup.topics, 0)?;

    let mut config = ExperimentConfig { target_domain: target, ..ExperimentConfig::default() };
    config.encoder.embedding_dim = 16;
    config.encoder.hidden_dim = 16;
    config.hyper.epochs = 6;
    config.hyper.lr_prediction = 3e-3;
    config.hyper.lr_weighting = 3e-3;
    let report = run_experiment(&dataset, &config)?;
    println!("{}", report.to_markdown());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run_example()
}
