use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::params::{sigmoid, slice1, slice1_mut, slice2, slice2_mut, uniform1, uniform2, ParamSet};
use crate::corpus::NUM_LABELS;
use crate::seed::Rng;

pub const DEFAULT_DROPOUT: f64 = 0.2;

const MAX_LOGIT: f64 = 36.0;

/// Linear map from features to the 11 label logits, behind dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionHead {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub dropout: f64,
}

impl PredictionHead {
    pub fn new(input: usize, dropout: f64, rng: &mut Rng) -> Self {
        let k = 1.0 / (input as f64).sqrt();
        Self { weight: uniform2(input, NUM_LABELS, k, rng), bias: uniform1(NUM_LABELS, k, rng), dropout }
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut l = x.dot(&self.weight);
        l += &self.bias;
        l
    }

    /// Inference-mode label distribution, one row per document.
    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        softmax_rows(self.logits(x))
    }
}

impl ParamSet for PredictionHead {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![slice2(&self.weight), slice1(&self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![slice2_mut(&mut self.weight), slice1_mut(&mut self.bias)]
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
            dropout: self.dropout,
        }
    }
}

/// Linear map from features to one logit; the sigmoid of it is the
/// probability that a document comes from the target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingHead {
    pub weight: Array1<f64>,
    pub bias: Array1<f64>,
}

impl WeightingHead {
    pub fn new(input: usize, rng: &mut Rng) -> Self {
        let k = 1.0 / (input as f64).sqrt();
        Self { weight: uniform1(input, k, rng), bias: uniform1(1, k, rng) }
    }

    pub fn zeros(input: usize) -> Self {
        Self { weight: Array1::zeros(input), bias: Array1::zeros(1) }
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array1<f64> {
        x.dot(&self.weight) + self.bias[0]
    }

    /// In-domain probabilities. Logits are clamped to ±36 so that every
    /// value stays strictly inside (0, 1) in double precision.
    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        self.logits(x).iter().map(|&s| sigmoid(s.clamp(-MAX_LOGIT, MAX_LOGIT))).collect()
    }
}

impl ParamSet for WeightingHead {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![slice1(&self.weight), slice1(&self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![slice1_mut(&mut self.weight), slice1_mut(&mut self.bias)]
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.len())
    }
}

pub fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    logits
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
