use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::encoder::{BiGruEncoder, EncoderConfig, EncoderKind, FeatureEncoder};
use super::heads::{PredictionHead, WeightingHead, DEFAULT_DROPOUT};
use super::model::{BatchRef, L2afModel, LossSpec, WeightGradient, WeightSource};
use super::optim::{Optimizer, OptimizerKind};
use super::params::softplus;
use super::vocab::Vocabulary;
use crate::baseline::{f1_score, Averaging};
use crate::corpus::{Dataset, Document, MoralLabel};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

pub const DEFAULT_MAX_VOCAB: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum WeightMode {
    /// Weights come from the weighting head, which is trained first.
    #[default]
    Learned,
    /// Every source instance gets this weight and the weighting head is
    /// neither used for weights nor pre-trained.
    Pinned(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct L2afHyperparams {
    /// Coefficient of the domain-classification term.
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Learning rate for the encoder and prediction head.
    pub lr_prediction: f64,
    /// Learning rate for the weighting head (and the encoder while the
    /// weighting head is pre-trained).
    pub lr_weighting: f64,
    /// Epochs without a lower domain loss before pre-training stops.
    pub weighting_patience: usize,
    pub weighting_max_epochs: usize,
    /// Whether pre-training the weighting head also moves the encoder.
    pub weighting_trains_encoder: bool,
    /// Whether the domain term of the joint loss also moves the encoder
    /// after pre-training. Off, only the weighting head follows it.
    pub domain_trains_encoder: bool,
    /// Epochs without a better validation macro-F1 before training stops;
    /// `None` always runs every epoch.
    pub early_stopping_patience: Option<usize>,
    /// Source documents per target-validation document in each batch.
    pub source_target_ratio: usize,
    pub dropout: f64,
    pub max_vocab: usize,
    pub weight_mode: WeightMode,
    pub weight_gradient: WeightGradient,
    pub normalize_weights: bool,
    /// Decoupled weight decay used when the encoder is contextual.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for L2afHyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            batch_size: 16,
            epochs: 30,
            lr_prediction: 1e-4,
            lr_weighting: 1e-4,
            weighting_patience: 3,
            weighting_max_epochs: 20,
            weighting_trains_encoder: true,
            domain_trains_encoder: false,
            early_stopping_patience: Some(5),
            source_target_ratio: 3,
            dropout: DEFAULT_DROPOUT,
            max_vocab: DEFAULT_MAX_VOCAB,
            weight_mode: WeightMode::Learned,
            weight_gradient: WeightGradient::Stop,
            normalize_weights: false,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl L2afHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and non-negative");
        }
        if self.batch_size == 0 || self.source_target_ratio == 0 {
            return bad("batch_size and source_target_ratio must be at least 1");
        }
        for lr in [self.lr_prediction, self.lr_weighting] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("learning rates must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if let WeightMode::Pinned(c) = self.weight_mode {
            if !(c >= 0.0 && c.is_finite()) {
                return bad("pinned weight must be finite and non-negative");
            }
        }
        if self.max_vocab == 0 {
            return bad("max_vocab must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Pre-training the weighting head on the domain task.
    Weighting,
    /// Joint optimisation of both tasks.
    Joint,
}

/// One optimisation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub step: usize,
    pub total: f64,
    pub domain: f64,
    pub moral_term: f64,
    pub moral_ce: f64,
}

/// One epoch, as written to the JSONL training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub mean_domain_loss: f64,
    pub mean_moral_loss: f64,
    pub validation_domain_loss: Option<f64>,
    pub validation_macro_f1: Option<f64>,
    pub mean_source_weight: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    pub best_epoch: Option<usize>,
    pub best_validation_macro_f1: Option<f64>,
}

impl TrainReport {
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for e in &self.epochs {
            serde_json::to_writer(&mut out, e)?;
            out.push(b'\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

/// Builds a freshly initialised model over the vocabulary of the training
/// text. Each parameter group draws from its own seed stream, so models with
/// and without a weighting head start from identical encoder and prediction
/// parameters.
pub fn build_model(
    sources: &Dataset,
    target_validation: &Dataset,
    encoder: &EncoderConfig,
    hyper: &L2afHyperparams,
    with_weighting: bool,
) -> Result<L2afModel> {
    hyper.validate()?;
    let vocab = Vocabulary::build(
        sources.documents().iter().chain(target_validation.documents()).map(|d| d.tokens.as_slice()),
        hyper.max_vocab,
    );
    let mut config = encoder.clone();
    config.vocab_size = vocab.len();
    let enc = BiGruEncoder::new(&config, &vocab, &mut seed::rng(hyper.seed, "l2af/init/encoder"))?;
    let dim = enc.output_dim();
    let prediction = PredictionHead::new(dim, hyper.dropout, &mut seed::rng(hyper.seed, "l2af/init/prediction"));
    let weighting = with_weighting.then(|| WeightingHead::new(dim, &mut seed::rng(hyper.seed, "l2af/init/weighting")));
    Ok(L2afModel { config, vocab, encoder: enc, prediction, weighting })
}

/// Trains the adaptive model: the weighting head is first fitted on the
/// in-domain vs out-domain task, then both heads are optimised jointly.
pub fn train(
    sources: &Dataset,
    target_validation: &Dataset,
    encoder: &EncoderConfig,
    hyper: &L2afHyperparams,
) -> Result<(L2afModel, TrainReport)> {
    let model = build_model(sources, target_validation, encoder, hyper, true)?;
    train_model(model, sources, target_validation, hyper)
}

/// Trains the same network without a weighting head: plain cross-entropy on
/// the source documents, early-stopped on the target validation split.
pub fn train_no_adapt(
    sources: &Dataset,
    target_validation: &Dataset,
    encoder: &EncoderConfig,
    hyper: &L2afHyperparams,
) -> Result<(L2afModel, TrainReport)> {
    let model = build_model(sources, target_validation, encoder, hyper, false)?;
    train_model(model, sources, target_validation, hyper)
}

struct Encoded {
    seqs: Vec<Vec<usize>>,
    labels: Vec<MoralLabel>,
}

fn encode_all<E: FeatureEncoder>(model: &L2afModel<E>, docs: &[Document]) -> Result<Encoded> {
    let seqs = docs
        .iter()
        .map(|d| model.vocab.encode(&d.tokens, model.config.max_len))
        .collect::<Result<Vec<_>>>()?;
    Ok(Encoded { seqs, labels: docs.iter().map(|d| d.label).collect() })
}

/// Training loop for any encoder. A model without a weighting head is trained
/// as the non-adaptive baseline.
pub fn train_model<E: FeatureEncoder>(
    model: L2afModel<E>,
    sources: &Dataset,
    target_validation: &Dataset,
    hyper: &L2afHyperparams,
) -> Result<(L2afModel<E>, TrainReport)> {
    hyper.validate()?;
    check_protocol(sources, target_validation)?;
    run(model, sources, target_validation, hyper)
}

/// Trains the non-adaptive network on a split of the target domain itself.
/// Early stopping is off because no held-out target data remains.
pub fn train_in_domain(
    train_split: &Dataset,
    encoder: &EncoderConfig,
    hyper: &L2afHyperparams,
) -> Result<(L2afModel, TrainReport)> {
    if train_split.documents().is_empty() {
        return Err(Error::invalid("in-domain training split is empty"));
    }
    let hyper = L2afHyperparams { early_stopping_patience: None, ..hyper.clone() };
    let model = build_model(train_split, &Dataset::new(Vec::new()), encoder, &hyper, false)?;
    run(model, train_split, train_split, &hyper)
}

fn run<E: FeatureEncoder>(
    mut model: L2afModel<E>,
    sources: &Dataset,
    target_validation: &Dataset,
    hyper: &L2afHyperparams,
) -> Result<(L2afModel<E>, TrainReport)> {
    let src = encode_all(&model, sources.documents())?;
    let tgt = encode_all(&model, target_validation.documents())?;
    let adaptive = model.weighting.is_some();
    let mut report = TrainReport::default();

    if adaptive && hyper.weight_mode == WeightMode::Learned {
        pretrain_weighting(&mut model, &src, &tgt, hyper, &mut report)?;
    }

    let pred_kind = match model.encoder.kind() {
        EncoderKind::BiGru => OptimizerKind::RmsProp,
        EncoderKind::Contextual => OptimizerKind::AdamW { weight_decay: hyper.weight_decay },
    };
    let mut opt_enc = Optimizer::new(pred_kind, hyper.lr_prediction, &model.encoder);
    let mut opt_pred = Optimizer::new(pred_kind, hyper.lr_prediction, &model.prediction);
    let mut opt_phi = model.weighting.as_ref().map(|w| Optimizer::new(OptimizerKind::Adam, hyper.lr_weighting, w));

    let mut order_rng = seed::rng(hyper.seed, "l2af/order/source");
    let mut target_rng = seed::rng(hyper.seed, "l2af/order/target");
    let mut dropout_rng = seed::rng(hyper.seed, "l2af/dropout");
    let mut target_cycle = Cycle::new(tgt.seqs.len());
    let per_batch_target = hyper.batch_size.div_ceil(hyper.source_target_ratio);
    let weights = match hyper.weight_mode {
        _ if !adaptive => WeightSource::Constant(1.0),
        WeightMode::Learned => WeightSource::Head,
        WeightMode::Pinned(c) => WeightSource::Constant(c),
    };
    let alpha = if adaptive { hyper.alpha } else { 0.0 };
    let dim = model.encoder.output_dim();

    let mut best: Option<(f64, usize, L2afModel<E>)> = None;
    let mut order: Vec<usize> = (0..src.seqs.len()).collect();
    let mut step = 0;
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut order_rng);
        let (mut sum_domain, mut sum_moral, mut sum_w, mut n_w, mut batches) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for chunk in order.chunks(hyper.batch_size) {
            let mut seqs: Vec<Vec<usize>> = chunk.iter().map(|&i| src.seqs[i].clone()).collect();
            let mut labels: Vec<Option<MoralLabel>> = chunk.iter().map(|&i| Some(src.labels[i])).collect();
            let mut in_domain = vec![false; chunk.len()];
            if adaptive {
                for _ in 0..per_batch_target {
                    let j = target_cycle.next(&mut target_rng);
                    seqs.push(tgt.seqs[j].clone());
                    labels.push(None);
                    in_domain.push(true);
                }
            }
            let mask = dropout_mask(seqs.len(), chunk.len(), dim, model.prediction.dropout, &mut dropout_rng);
            let spec = LossSpec {
                alpha,
                weights,
                gradient: hyper.weight_gradient,
                normalize: hyper.normalize_weights,
                dropout: Some(&mask),
                domain_into_encoder: hyper.domain_trains_encoder,
            };
            let batch = BatchRef { seqs: &seqs, labels: &labels, in_domain: &in_domain };
            let (parts, grads) = model.joint_loss_and_grad(batch, &spec)?;
            if !parts.total.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}, step {step}")));
            }
            opt_enc.step(&mut model.encoder, &grads.encoder);
            opt_pred.step(&mut model.prediction, &grads.prediction);
            if let (Some(opt), Some(head)) = (opt_phi.as_mut(), model.weighting.as_mut()) {
                if hyper.weight_mode == WeightMode::Learned {
                    opt.step(head, &grads.weighting);
                }
            }
            sum_domain += parts.domain;
            sum_moral += parts.moral_term;
            sum_w += parts.weights.iter().sum::<f64>();
            n_w += parts.weights.len();
            batches += 1;
            report.steps.push(StepRecord {
                phase: Phase::Joint,
                epoch,
                step,
                total: parts.total,
                domain: parts.domain,
                moral_term: parts.moral_term,
                moral_ce: parts.moral_ce,
            });
            step += 1;
        }
        let predicted = model.infer(&tgt.seqs)?;
        let f1 = f1_score(&tgt.labels, &predicted, Averaging::Macro);
        report.epochs.push(EpochRecord {
            phase: Phase::Joint,
            epoch,
            mean_domain_loss: if adaptive { sum_domain / batches.max(1) as f64 } else { 0.0 },
            mean_moral_loss: sum_moral / batches.max(1) as f64,
            validation_domain_loss: None,
            validation_macro_f1: Some(f1),
            mean_source_weight: adaptive.then(|| sum_w / n_w.max(1) as f64),
        });
        if let Some(patience) = hyper.early_stopping_patience {
            if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                best = Some((f1, epoch, model.clone()));
            } else if epoch - best.as_ref().expect("set above").1 >= patience {
                break;
            }
        }
    }
    if let Some((f1, epoch, snapshot)) = best {
        model = snapshot;
        report.best_epoch = Some(epoch);
        report.best_validation_macro_f1 = Some(f1);
    } else if let Some(last) = report.epochs.last() {
        report.best_epoch = Some(last.epoch);
        report.best_validation_macro_f1 = last.validation_macro_f1;
    }
    Ok((model, report))
}

fn check_protocol(sources: &Dataset, target_validation: &Dataset) -> Result<()> {
    if sources.documents().is_empty() {
        return Err(Error::invalid("no source documents"));
    }
    if target_validation.documents().is_empty() {
        return Err(Error::invalid("target validation split is empty"));
    }
    let targets: BTreeSet<&str> = target_validation.documents().iter().map(|d| d.domain.as_str()).collect();
    if let Some(d) = sources.documents().iter().find(|d| targets.contains(d.domain.as_str())) {
        return Err(Error::Protocol(format!("target domain `{}` appears among the sources", d.domain)));
    }
    Ok(())
}

/// Fits the weighting head (and encoder) on the domain task with Adam until
/// a held-out domain loss stops improving, then keeps the best parameters.
fn pretrain_weighting<E: FeatureEncoder>(
    model: &mut L2afModel<E>,
    src: &Encoded,
    tgt: &Encoded,
    hyper: &L2afHyperparams,
    report: &mut TrainReport,
) -> Result<()> {
    let mut rng = seed::rng(hyper.seed, "l2af/weighting/sample");
    // A fifth of the target documents, and out-domain documents in the batch
    // ratio, are kept aside to judge convergence.
    let mut targets: Vec<usize> = (0..tgt.seqs.len()).collect();
    targets.shuffle(&mut rng);
    let tgt_holdout_n = if targets.len() > 1 { (targets.len() / 5).max(1) } else { 0 };
    let (tgt_holdout, tgt_train) = targets.split_at(tgt_holdout_n);
    let tgt_holdout: Vec<Vec<usize>> = tgt_holdout.iter().map(|&j| tgt.seqs[j].clone()).collect();
    let tgt_train = tgt_train.to_vec();
    let mut target_cycle = Cycle::new(tgt_train.len());
    let mut shuffled: Vec<usize> = (0..src.seqs.len()).collect();
    shuffled.shuffle(&mut rng);
    let holdout_n = (hyper.source_target_ratio * tgt_holdout_n.max(1)).min(src.seqs.len() / 5).max(1);
    let (holdout, train_pool) = shuffled.split_at(holdout_n.min(shuffled.len() - 1));
    let mut order = train_pool.to_vec();
    let per_batch_target = hyper.batch_size.div_ceil(hyper.source_target_ratio);

    let mut opt_enc = Optimizer::new(OptimizerKind::Adam, hyper.lr_weighting, &model.encoder);
    let mut opt_phi = Optimizer::new(
        OptimizerKind::Adam,
        hyper.lr_weighting,
        model.weighting.as_ref().expect("adaptive model"),
    );
    let spec = LossSpec { alpha: 1.0, weights: WeightSource::Constant(0.0), ..LossSpec::new(1.0) };
    let mut best: Option<(f64, E, WeightingHead)> = None;
    let mut since_best = 0;
    let mut step = 0;
    // An epoch is one pass over the sources, as in joint training.
    for epoch in 0..hyper.weighting_max_epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(hyper.batch_size) {
            let mut seqs: Vec<Vec<usize>> = chunk.iter().map(|&i| src.seqs[i].clone()).collect();
            let mut in_domain = vec![false; seqs.len()];
            seqs.extend((0..per_batch_target).map(|_| tgt.seqs[tgt_train[target_cycle.next(&mut rng)]].clone()));
            in_domain.resize(seqs.len(), true);
            let labels = vec![None; seqs.len()];
            let batch = BatchRef { seqs: &seqs, labels: &labels, in_domain: &in_domain };
            let (parts, grads) = model.joint_loss_and_grad(batch, &spec)?;
            if !parts.domain.is_finite() {
                return Err(Error::Numerical("non-finite domain loss while fitting the weighting head".into()));
            }
            if hyper.weighting_trains_encoder {
                opt_enc.step(&mut model.encoder, &grads.encoder);
            }
            opt_phi.step(model.weighting.as_mut().expect("adaptive model"), &grads.weighting);
            sum += parts.domain;
            batches += 1;
            report.steps.push(StepRecord {
                phase: Phase::Weighting,
                epoch,
                step,
                total: parts.total,
                domain: parts.domain,
                moral_term: 0.0,
                moral_ce: 0.0,
            });
            step += 1;
        }
        let in_domain = if tgt_holdout.is_empty() { &tgt.seqs } else { &tgt_holdout };
        let val = domain_loss(model, holdout.iter().map(|&i| &src.seqs[i]), in_domain)?;
        report.epochs.push(EpochRecord {
            phase: Phase::Weighting,
            epoch,
            mean_domain_loss: sum / batches.max(1) as f64,
            mean_moral_loss: 0.0,
            validation_domain_loss: Some(val),
            validation_macro_f1: None,
            mean_source_weight: None,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val < *b) {
            best = Some((val, model.encoder.clone(), model.weighting.clone().expect("adaptive model")));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hyper.weighting_patience {
                break;
            }
        }
    }
    if let Some((_, enc, head)) = best {
        model.encoder = enc;
        model.weighting = Some(head);
    }
    Ok(())
}

/// Mean binary cross-entropy of the weighting head over the pooled held-out
/// documents, which keep the same out:in ratio as the training batches.
fn domain_loss<'a, E: FeatureEncoder>(
    model: &L2afModel<E>,
    out_domain: impl Iterator<Item = &'a Vec<usize>>,
    in_domain: &[Vec<usize>],
) -> Result<f64> {
    let head = model.weighting.as_ref().expect("adaptive model");
    let bce_sum = |seqs: &[Vec<usize>], y: f64| -> Result<f64> {
        let mut total = 0.0;
        for chunk in seqs.chunks(256) {
            let logits = head.logits(&model.features(chunk)?);
            total += logits.iter().map(|&s| softplus(s) - y * s).sum::<f64>();
        }
        Ok(total)
    };
    let out: Vec<Vec<usize>> = out_domain.cloned().collect();
    Ok((bce_sum(&out, 0.0)? + bce_sum(in_domain, 1.0)?) / (out.len() + in_domain.len()) as f64)
}

/// Inverted-dropout multipliers. Only the first `labelled` rows draw from the
/// stream; the rest are ones, so adding unlabelled rows never shifts it.
fn dropout_mask(rows: usize, labelled: usize, dim: usize, p: f64, rng: &mut Rng) -> Array2<f64> {
    let mut mask = Array2::from_elem((rows, dim), 1.0);
    if p > 0.0 {
        let keep = 1.0 / (1.0 - p);
        for v in mask.slice_mut(ndarray::s![..labelled, ..]).iter_mut() {
            *v = if rng.random::<f64>() < p { 0.0 } else { keep };
        }
    }
    mask
}

/// Endless shuffled walk over `0..n`, reshuffled on every pass.
struct Cycle {
    order: Vec<usize>,
    pos: usize,
}

impl Cycle {
    fn new(n: usize) -> Self {
        Self { order: (0..n).collect(), pos: n }
    }

    fn next(&mut self, rng: &mut Rng) -> usize {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Mean in-domain probability the weighting head assigns to each domain.
pub fn mean_weight_by_domain<E: FeatureEncoder>(
    model: &L2afModel<E>,
    dataset: &Dataset,
) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for domain in dataset.domains() {
        let docs: Vec<&Document> = dataset.documents().iter().filter(|d| &d.domain == domain).collect();
        let w = model.instance_weights(&docs)?;
        out.push((domain.to_string(), w.iter().sum::<f64>() / w.len().max(1) as f64));
    }
    Ok(out)
}
