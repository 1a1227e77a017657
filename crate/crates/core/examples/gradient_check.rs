//! Compare the hand-derived gradients of the joint loss with finite
//! differences on a tiny model, for both weight-gradient modes.
//!
//! ```sh
//! cargo run --release --example gradient_check
//! ```

use moralshift::l2af::{
    check_gradients, BatchRef, BiGruEncoder, EncoderConfig, L2afModel, LossSpec, PredictionHead, Vocabulary, WeightGradient,
    WeightingHead,
};
use moralshift::MoralLabel;

pub fn run_example() -> anyhow::Result<()> {
    let vocab = Vocabulary::from_tokens((0..20).map(|i| format!("w{i}")).collect());
    let config = EncoderConfig { vocab_size: 20, embedding_dim: 4, hidden_dim: 4, ..EncoderConfig::default() };
    let seqs = vec![vec![2, 5, 7, 3, 19], vec![4, 11, 8], vec![6, 6]];
    let labels = vec![Some(MoralLabel::Care), Some(MoralLabel::Harm), None];
    let in_domain = vec![false, false, true];
    let batch = BatchRef { seqs: &seqs, labels: &labels, in_domain: &in_domain };

    for draw in 0..3 {
        let mut rng = moralshift::seed::rng(draw, "example/gradient-check");
        let encoder = BiGruEncoder::new(&config, &vocab, &mut rng)?;
        let prediction = PredictionHead::new(8, 0.0, &mut rng);
        let weighting = Some(WeightingHead::new(8, &mut rng));
        let model = L2afModel { config: config.clone(), vocab: vocab.clone(), encoder, prediction, weighting };
        for gradient in [WeightGradient::Stop, WeightGradient::Full] {
            let spec = LossSpec { gradient, ..LossSpec::new(0.5) };
            let check = check_gradients(&model, batch, &spec, 1e-3, 1e-8)?;
            println!(
                "draw {draw} {gradient:?}: {} parameters, max relative error {:.2e}, max absolute error {:.2e}",
                check.parameters, check.max_relative_error, check.max_absolute_error
            );
        }
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run_example()
}
