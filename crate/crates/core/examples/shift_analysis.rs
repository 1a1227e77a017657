//! Fit a topic model on a synthetic corpus, build topic and label
//! similarity matrices between domains, and test how they relate.
//!
//! ```sh
//! cargo run --release --example shift_analysis
//! ```

use moralshift::shift_analysis::{fit_lda, shift_tests, similarity_matrix, LdaConfig, SimilarityKind, SimilarityMatrix};
use moralshift::synth::{generate, Scenario, ShiftKnob};

fn print_matrix(title: &str, m: &SimilarityMatrix) {
    println!("{title}");
    print!("{:>6}", "");
    for d in &m.domains {
        print!("{d:>7}");
    }
    println!();
    for (d, row) in m.domains.iter().zip(&m.values) {
        print!("{d:>6}");
        for v in row {
            print!("{v:>7.3}");
        }
        println!();
    }
    println!();
}

pub fn run_example() -> anyhow::Result<()> {
    // Seven domains give 21 pairs, enough for the normality test to run.
    let mut scenario = Scenario::per_domain_shift(ShiftKnob::new(0.6, 0.6)?).with_docs_per_domain(150);
    scenario.domain_names = (0..7).map(|i| format!("dom{i}")).collect();
    scenario.groups = (0..7).collect();
    scenario.vocab_size = 500;
    scenario.num_topics = 8;
    let setup = scenario.build(3)?;
    let dataset = generate(&setup.specs, &setup.topics, 3)?;

    let config = LdaConfig { iterations: 200, averaging: 20, alpha: Some(0.1), ..LdaConfig::with_topics(8) };
    let model = fit_lda(&dataset, &config)?;
    let topic = similarity_matrix(&dataset, Some(&model), SimilarityKind::Topic)?;
    let label = similarity_matrix(&dataset, None, SimilarityKind::Label)?;
    print_matrix("topic similarity", &topic);
    print_matrix("label similarity", &label);

    let report = shift_tests(&topic, &label, None)?;
    println!("{}", report.to_json()?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run_example()
}
