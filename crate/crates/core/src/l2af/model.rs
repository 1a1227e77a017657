use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::encoder::{BiGruEncoder, EncoderConfig, FeatureEncoder};
use super::heads::{argmax, softmax_rows, PredictionHead, WeightingHead};
use super::params::{sigmoid, softplus, ParamSet};
use super::vocab::Vocabulary;
use crate::corpus::{Document, MoralLabel, NUM_LABELS};
use crate::error::{Error, Result};

/// Shared encoder feeding a label head and, for the adaptive variant, an
/// in-domain weighting head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L2afModel<E = BiGruEncoder> {
    pub config: EncoderConfig,
    pub vocab: Vocabulary,
    pub encoder: E,
    pub prediction: PredictionHead,
    pub weighting: Option<WeightingHead>,
}

/// Gradient of the joint loss, laid out like the model's parameters.
#[derive(Debug, Clone)]
pub struct Gradients<E> {
    pub encoder: E,
    pub prediction: PredictionHead,
    pub weighting: WeightingHead,
}

/// One training batch. Rows with a label take part in the moral term;
/// `in_domain` is the weighting target for every row.
#[derive(Debug, Clone, Copy)]
pub struct BatchRef<'a> {
    pub seqs: &'a [Vec<usize>],
    pub labels: &'a [Option<MoralLabel>],
    pub in_domain: &'a [bool],
}

/// Where the instance weights of the moral term come from.
#[derive(Debug, Clone, Copy)]
pub enum WeightSource<'a> {
    /// The weighting head's output for each labelled row.
    Head,
    Constant(f64),
    /// One frozen weight per labelled row, in row order.
    Fixed(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightGradient {
    /// The weight is a constant multiplier: the moral term never reaches the
    /// weighting head.
    #[default]
    Stop,
    /// Differentiate the moral term through the weight as well.
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct LossSpec<'a> {
    pub alpha: f64,
    pub weights: WeightSource<'a>,
    pub gradient: WeightGradient,
    /// Rescale the batch's weights to mean 1 before use.
    pub normalize: bool,
    /// Inverted-dropout multipliers for the prediction head's input, one row
    /// per batch row. `None` means inference mode.
    pub dropout: Option<&'a Array2<f64>>,
    /// Let the domain term back-propagate into the encoder. Turning it off
    /// leaves the encoder gradient to the moral term alone.
    pub domain_into_encoder: bool,
}

impl LossSpec<'_> {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            weights: WeightSource::Head,
            gradient: WeightGradient::Stop,
            normalize: false,
            dropout: None,
            domain_into_encoder: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// `alpha * domain + moral_term`.
    pub total: f64,
    /// Mean binary cross-entropy of the weighting task over all rows.
    pub domain: f64,
    /// Mean over labelled rows of weight times cross-entropy.
    pub moral_term: f64,
    /// Unweighted mean cross-entropy over labelled rows.
    pub moral_ce: f64,
    /// Weights applied to the labelled rows.
    pub weights: Vec<f64>,
}

impl<E: FeatureEncoder> L2afModel<E> {
    pub fn features(&self, seqs: &[Vec<usize>]) -> Result<Array2<f64>> {
        Ok(self.encoder.encode(seqs)?.0)
    }

    /// Label distribution per row, dropout off.
    pub fn predict_moral(&self, x: &Array2<f64>) -> Array2<f64> {
        self.prediction.predict(x)
    }

    pub fn predict_weight(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(self.weighting_head()?.predict(x))
    }

    fn weighting_head(&self) -> Result<&WeightingHead> {
        self.weighting.as_ref().ok_or_else(|| Error::invalid("model has no weighting head"))
    }

    pub fn encode_documents(&self, docs: &[&Document]) -> Result<Vec<Vec<usize>>> {
        docs.iter().map(|d| self.vocab.encode(&d.tokens, self.config.max_len)).collect()
    }

    /// Most probable label per sequence; ties go to the lowest label index.
    pub fn infer(&self, seqs: &[Vec<usize>]) -> Result<Vec<MoralLabel>> {
        let probs = self.predict_moral(&self.features(seqs)?);
        Ok(probs.axis_iter(Axis(0)).map(|row| MoralLabel::from_index(argmax(row)).expect("argmax below NUM_LABELS")).collect())
    }

    pub fn infer_documents(&self, docs: &[&Document]) -> Result<Vec<MoralLabel>> {
        let mut out = Vec::with_capacity(docs.len());
        for chunk in docs.chunks(256) {
            out.extend(self.infer(&self.encode_documents(chunk)?)?);
        }
        Ok(out)
    }

    /// In-domain probability for each document.
    pub fn instance_weights(&self, docs: &[&Document]) -> Result<Vec<f64>> {
        let head = self.weighting_head()?;
        let mut out = Vec::with_capacity(docs.len());
        for chunk in docs.chunks(256) {
            out.extend(head.predict(&self.features(&self.encode_documents(chunk)?)?));
        }
        Ok(out)
    }

    pub fn joint_loss(&self, batch: BatchRef<'_>, spec: &LossSpec<'_>) -> Result<LossParts> {
        Ok(self.evaluate(batch, spec, false)?.0)
    }

    pub fn joint_loss_and_grad(&self, batch: BatchRef<'_>, spec: &LossSpec<'_>) -> Result<(LossParts, Gradients<E>)> {
        let (parts, grads) = self.evaluate(batch, spec, true)?;
        Ok((parts, grads.expect("gradient requested")))
    }

    fn evaluate(
        &self,
        batch: BatchRef<'_>,
        spec: &LossSpec<'_>,
        want_grad: bool,
    ) -> Result<(LossParts, Option<Gradients<E>>)> {
        let n = batch.seqs.len();
        if batch.labels.len() != n || batch.in_domain.len() != n {
            return Err(Error::invalid("batch columns have different lengths"));
        }
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if spec.alpha < 0.0 || !spec.alpha.is_finite() {
            return Err(Error::invalid("alpha must be a finite non-negative number"));
        }
        let (x, cache) = self.encoder.encode(batch.seqs)?;
        let dim = x.ncols();
        let source: Vec<usize> = (0..n).filter(|&i| batch.labels[i].is_some()).collect();
        let n_src = source.len();

        let uses_head = spec.alpha > 0.0 || matches!(spec.weights, WeightSource::Head);
        let phi_logits = match (&self.weighting, uses_head) {
            (Some(head), _) => Some(head.logits(&x)),
            (None, false) => None,
            (None, true) => return Err(Error::invalid("model has no weighting head")),
        };

        // Domain term.
        let mut domain = 0.0;
        if let Some(s) = &phi_logits {
            for i in 0..n {
                let y = if batch.in_domain[i] { 1.0 } else { 0.0 };
                domain += softplus(s[i]) - y * s[i];
            }
            domain /= n as f64;
        }

        // Instance weights for labelled rows.
        let mut weights: Vec<f64> = match spec.weights {
            WeightSource::Head => {
                let s = phi_logits.as_ref().expect("head present");
                source.iter().map(|&i| sigmoid(s[i])).collect()
            }
            WeightSource::Constant(c) => vec![c; n_src],
            WeightSource::Fixed(w) => {
                if w.len() != n_src {
                    return Err(Error::invalid("fixed weights must match the labelled rows"));
                }
                w.to_vec()
            }
        };
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("instance weights must be finite and non-negative"));
        }
        let full_grad = spec.gradient == WeightGradient::Full && matches!(spec.weights, WeightSource::Head);
        if spec.normalize && n_src > 0 {
            if full_grad {
                return Err(Error::invalid("weight normalisation is only supported with a stopped weight gradient"));
            }
            let mean = weights.iter().sum::<f64>() / n_src as f64;
            if mean > 0.0 {
                weights.iter_mut().for_each(|w| *w /= mean);
            }
        }

        // Moral term.
        let xd = match spec.dropout {
            Some(mask) => {
                if mask.dim() != x.dim() {
                    return Err(Error::invalid("dropout mask shape does not match the features"));
                }
                &x * mask
            }
            None => x.clone(),
        };
        let mut probs = Array2::zeros((n_src, NUM_LABELS));
        let mut ce = vec![0.0; n_src];
        if n_src > 0 {
            let xs = xd.select(Axis(0), &source);
            let logits = self.prediction.logits(&xs);
            for (k, row) in logits.axis_iter(Axis(0)).enumerate() {
                let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                let y = batch.labels[source[k]].expect("labelled row").index();
                ce[k] = lse - row[y];
            }
            probs = softmax_rows(logits);
        }
        let (moral_term, moral_ce) = if n_src > 0 {
            let m = n_src as f64;
            (ce.iter().zip(&weights).map(|(c, w)| c * w).sum::<f64>() / m, ce.iter().sum::<f64>() / m)
        } else {
            (0.0, 0.0)
        };
        let parts = LossParts { total: spec.alpha * domain + moral_term, domain, moral_term, moral_ce, weights };
        if !want_grad {
            return Ok((parts, None));
        }

        // Backward.
        let mut g_pred = self.prediction.zeros_like();
        let mut g_phi = self.weighting.as_ref().map_or_else(|| WeightingHead::zeros(dim), |h| h.zeros_like());
        let mut dx = Array2::<f64>::zeros((n, dim));
        if n_src > 0 {
            let m = n_src as f64;
            let mut dlogits = probs;
            for (k, mut row) in dlogits.axis_iter_mut(Axis(0)).enumerate() {
                row[batch.labels[source[k]].expect("labelled row").index()] -= 1.0;
                row *= parts.weights[k] / m;
            }
            let xs = xd.select(Axis(0), &source);
            g_pred.weight = xs.t().dot(&dlogits);
            g_pred.bias = dlogits.sum_axis(Axis(0));
            let dxs = dlogits.dot(&self.prediction.weight.t());
            for (k, &i) in source.iter().enumerate() {
                let mut row = dx.row_mut(i);
                match spec.dropout {
                    Some(mask) => row += &(&dxs.row(k) * &mask.row(i)),
                    None => row += &dxs.row(k),
                }
            }
        }
        if let (Some(head), Some(s)) = (&self.weighting, &phi_logits) {
            let mut ds_domain = Array1::<f64>::zeros(n);
            for i in 0..n {
                let y = if batch.in_domain[i] { 1.0 } else { 0.0 };
                ds_domain[i] = spec.alpha * (sigmoid(s[i]) - y) / n as f64;
            }
            let mut ds_moral = Array1::<f64>::zeros(n);
            if full_grad {
                for (k, &i) in source.iter().enumerate() {
                    let w = sigmoid(s[i]);
                    ds_moral[i] = ce[k] * w * (1.0 - w) / n_src as f64;
                }
            }
            let ds = &ds_domain + &ds_moral;
            g_phi.weight = x.t().dot(&ds);
            g_phi.bias[0] = ds.sum();
            let into_encoder = if spec.domain_into_encoder { ds } else { ds_moral };
            for i in 0..n {
                let mut row = dx.row_mut(i);
                row.scaled_add(into_encoder[i], &head.weight);
            }
        }
        let g_enc = self.encoder.backward(&cache, &dx);
        Ok((parts, Some(Gradients { encoder: g_enc, prediction: g_pred, weighting: g_phi })))
    }
}

impl L2afModel<BiGruEncoder> {
    /// Writes config, vocabulary and every tensor (with its shape) as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut model: Self = serde_json::from_reader(std::io::BufReader::new(file))?;
        model.vocab.restore_index();
        if model.encoder.vocab_size() != model.vocab.len() {
            return Err(Error::invalid("checkpoint embedding rows do not match its vocabulary"));
        }
        Ok(model)
    }
}
