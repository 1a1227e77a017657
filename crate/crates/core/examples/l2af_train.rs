//! Train the instance-weighting network on a small synthetic corpus with one
//! held-out target domain, then inspect the learned source weights.
//!
//! ```sh
//! cargo run --release --example l2af_train
//! ```

use moralshift::baseline::f1_scores;
use moralshift::eval::lodo_split;
use moralshift::l2af::{mean_weight_by_domain, train, EncoderConfig, L2afHyperparams};
use moralshift::synth::{generate, Scenario};

pub fn run_example() -> anyhow::Result<()> {
    let scenario = Scenario::strong_shift().with_docs_per_domain(150);
    let setup = scenario.build(0)?;
    let dataset = generate(&setup.specs, &setup.topics, 0)?;
    let split = lodo_split(&dataset, "dom0", 0)?;

    let encoder = EncoderConfig { embedding_dim: 16, hidden_dim: 16, ..EncoderConfig::default() };
    let hyper = L2afHyperparams { epochs: 8, lr_prediction: 3e-3, lr_weighting: 3e-3, ..L2afHyperparams::default() };
    let (model, report) = train(&split.source_train, &split.target_validation, &encoder, &hyper)?;

    for e in &report.epochs {
        println!(
            "{:?} epoch {:>2}: domain loss {:.4}, moral loss {:.4}, val F1 {}",
            e.phase,
            e.epoch,
            e.mean_domain_loss,
            e.mean_moral_loss,
            e.validation_macro_f1.map_or("-".into(), |f| format!("{f:.3}"))
        );
    }
    let test: Vec<_> = split.target_test.documents().iter().collect();
    let gold: Vec<_> = test.iter().map(|d| d.label).collect();
    println!("\ntarget test macro-F1 {:.3}", f1_scores(&gold, &model.infer_documents(&test)?).macro_f1);
    println!("mean weight per source domain (dom1 shares dom0's generator):");
    for (domain, w) in mean_weight_by_domain(&model, &split.source_train)? {
        println!("  {domain}: {w:.3}");
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run_example()
}
