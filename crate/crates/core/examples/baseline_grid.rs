//! Train the TF-IDF logistic-regression baseline on each domain and test it
//! on every domain, with and without planted shift.
//!
//! ```sh
//! cargo run --release --example baseline_grid
//! ```

use moralshift::baseline::{cross_domain_grid, Averaging, LogRegConfig};
use moralshift::synth::{generate, Scenario};

pub fn run_example() -> anyhow::Result<()> {
    for (name, scenario) in [("strong shift", Scenario::strong_shift()), ("no shift", Scenario::strong_shift().without_shift())] {
        let scenario = scenario.with_docs_per_domain(200);
        let setup = scenario.build(0)?;
        let dataset = generate(&setup.specs, &setup.topics, 0)?;
        let grid = cross_domain_grid(&dataset, 0, &LogRegConfig::default())?;

        println!("{name}: macro-F1, rows train, columns test");
        print!("{}", grid.to_csv(Averaging::Macro));
        let (inside, outside) = grid.in_out_means(Averaging::Macro);
        println!("in-domain mean {inside:.3}, out-of-domain mean {outside:.3}, gap {:.3}\n", inside - outside);
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run_example()
}
