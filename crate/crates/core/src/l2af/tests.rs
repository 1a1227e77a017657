use ndarray::{array, Array2};

use super::*;
use crate::corpus::{MoralLabel, NUM_LABELS};
use crate::seed;

pub(crate) fn miniature(draw: u64, dropout: f64) -> L2afModel {
    let vocab = Vocabulary::from_tokens((0..20).map(|i| format!("t{i}")).collect());
    let config = EncoderConfig { vocab_size: 20, embedding_dim: 4, hidden_dim: 4, ..EncoderConfig::default() };
    let mut rng = seed::rng(draw, "test/miniature");
    let encoder = BiGruEncoder::new(&config, &vocab, &mut rng).unwrap();
    let prediction = PredictionHead::new(8, dropout, &mut rng);
    let weighting = Some(WeightingHead::new(8, &mut rng));
    L2afModel { config, vocab, encoder, prediction, weighting }
}

fn mini_batch() -> (Vec<Vec<usize>>, Vec<Option<MoralLabel>>, Vec<bool>) {
    (
        vec![vec![2, 5, 7, 3, 19], vec![4, 11, 8]],
        vec![Some(MoralLabel::Care), None],
        vec![false, true],
    )
}

#[test]
fn gradients_match_finite_differences() {
    let (seqs, labels, in_domain) = mini_batch();
    let batch = BatchRef { seqs: &seqs, labels: &labels, in_domain: &in_domain };
    for draw in 0..4 {
        let model = miniature(draw, 0.0);
        for gradient in [WeightGradient::Stop, WeightGradient::Full] {
            let spec = LossSpec { gradient, ..LossSpec::new(0.7) };
            let check = check_gradients(&model, batch, &spec, 1e-3, 1e-8).unwrap();
            assert!(check.max_relative_error < 1e-4, "{gradient:?}: {check:?}");
            assert_eq!(check.parameters, model.encoder.num_params() + 8 * 11 + 11 + 8 + 1);
        }
    }
}

#[test]
fn gradients_match_with_dropout_mask_and_two_labelled_rows() {
    let seqs = vec![vec![2, 5, 7], vec![4, 11, 8, 9], vec![1, 1]];
    let labels = vec![Some(MoralLabel::Care), Some(MoralLabel::NoMoral), None];
    let in_domain = vec![false, false, true];
    let batch = BatchRef { seqs: &seqs, labels: &labels, in_domain: &in_domain };
    let mut mask = Array2::from_elem((3, 8), 1.25);
    mask[[0, 3]] = 0.0;
    mask[[1, 6]] = 0.0;
    let model = miniature(9, 0.2);
    let spec = LossSpec { dropout: Some(&mask), normalize: true, ..LossSpec::new(0.3) };
    let check = check_gradients(&model, batch, &spec, 1e-3, 1e-8).unwrap();
    assert!(check.max_relative_error < 1e-4, "{check:?}");
}

#[test]
fn encode_shapes_and_batch_independence() {
    let model = miniature(1, 0.0);
    let seqs = vec![vec![3, 4, 5], vec![6, 7], vec![3, 4, 5]];
    let x = model.features(&seqs).unwrap();
    assert_eq!(x.dim(), (3, 8));
    assert_eq!(x.row(0), x.row(2));
    let swapped = model.features(&[seqs[1].clone(), seqs[0].clone()]).unwrap();
    assert_eq!(swapped.row(0), x.row(1));
    assert_eq!(swapped.row(1), x.row(0));
    let alone = model.features(&seqs[1..2]).unwrap();
    assert_eq!(alone.row(0), x.row(1));
    assert!(model.features(&[vec![]]).is_err());
    assert!(model.features(&[vec![20]]).is_err());
}

#[test]
fn truncation_ignores_tokens_past_max_len() {
    let mut model = miniature(2, 0.0);
    model.encoder.max_len = 3;
    let a = model.features(&[vec![3, 4, 5, 6, 7]]).unwrap();
    let b = model.features(&[vec![3, 4, 5]]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn head_limits_and_symmetry() {
    let mut model = miniature(3, 0.0);
    model.prediction.weight.fill(0.0);
    model.prediction.bias.fill(0.0);
    model.weighting = Some(WeightingHead::zeros(8));
    let x = model.features(&[vec![2, 3], vec![9]]).unwrap();
    for row in model.predict_moral(&x).rows() {
        row.iter().for_each(|p| assert!((p - 1.0 / NUM_LABELS as f64).abs() < 1e-15));
    }
    assert_eq!(model.predict_weight(&x).unwrap(), vec![0.5, 0.5]);
    // Uniform output: ties go to the first label.
    assert_eq!(model.infer(&[vec![2, 3]]).unwrap(), vec![MoralLabel::Authority]);
}

#[test]
fn softmax_is_shift_invariant() {
    let l = array![[0.3, -1.0, 2.0, 0.0, 0.0, 1.0, 0.5, -0.5, 0.1, 0.2, 0.7]];
    let shifted = &l + 123.0;
    let (a, b) = (softmax_rows(l), softmax_rows(shifted));
    assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
}

#[test]
fn loss_reductions() {
    let model = miniature(4, 0.0);
    let seqs = vec![vec![2, 5], vec![6, 8, 9]];
    let labels = vec![Some(MoralLabel::Harm), Some(MoralLabel::Purity)];
    let in_domain = vec![false, false];
    let batch = BatchRef { seqs: &seqs, labels: &labels, in_domain: &in_domain };
    let plain = model
        .joint_loss(batch, &LossSpec { weights: WeightSource::Constant(1.0), ..LossSpec::new(0.0) })
        .unwrap();
    assert_eq!(plain.total, plain.moral_ce);
    let probs = model.predict_moral(&model.features(&seqs).unwrap());
    let ce = -(probs[[0, MoralLabel::Harm.index()]].ln() + probs[[1, MoralLabel::Purity.index()]].ln()) / 2.0;
    assert!((plain.total - ce).abs() < 1e-12);

    let unlabelled = vec![None, None];
    let only_domain = model
        .joint_loss(BatchRef { labels: &unlabelled, ..batch }, &LossSpec::new(0.5))
        .unwrap();
    assert_eq!(only_domain.moral_term, 0.0);
    assert!(only_domain.domain > 0.0);
    assert!((only_domain.total - 0.5 * only_domain.domain).abs() < 1e-15);
}

#[test]
fn inference_ignores_weighting_head() {
    let model = miniature(5, 0.2);
    let mut other = model.clone();
    other.weighting = Some(WeightingHead::zeros(8));
    let seqs = vec![vec![2, 5, 9], vec![7]];
    assert_eq!(model.infer(&seqs).unwrap(), other.infer(&seqs).unwrap());
    other.weighting = None;
    assert_eq!(model.infer(&seqs).unwrap(), other.infer(&seqs).unwrap());
}

#[test]
fn checkpoint_round_trip() {
    let model = miniature(6, 0.2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = L2afModel::load(&path).unwrap();
    assert_eq!(back.encoder, model.encoder);
    assert_eq!(back.vocab.id("t7"), 7);
    let seqs = vec![vec![3, 4]];
    assert_eq!(back.features(&seqs).unwrap(), model.features(&seqs).unwrap());
}
