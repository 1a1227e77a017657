//! Multinomial logistic regression with an L2 penalty, fitted by L-BFGS.

use serde::{Deserialize, Serialize};

use super::vectorizer::SparseVec;
use crate::corpus::{MoralLabel, NUM_LABELS};
use crate::error::{Error, Result};

/// How the L2 penalty scales with the training-set size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularization {
    /// Inverse strength C against the summed loss: `sum CE + ||W||² / (2C)`.
    InverseC(f64),
    /// Per-sample strength: `mean CE + λ/2 ||W||²`. Duplicating every
    /// training point leaves this objective unchanged.
    PerSample(f64),
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::InverseC(1.0)
    }
}

impl Regularization {
    fn per_sample(&self, n: usize) -> f64 {
        match *self {
            Regularization::InverseC(c) => 1.0 / (c * n as f64),
            Regularization::PerSample(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogRegConfig {
    pub regularization: Regularization,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub memory: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            regularization: Regularization::default(),
            tolerance: 1e-4,
            max_iterations: 1000,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// Labels present in training, in scheme order; row `c` of `weights`
    /// scores `classes[c]`.
    pub classes: Vec<MoralLabel>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub regularization: Regularization,
    pub iterations: usize,
    pub gradient_norm: f64,
}

struct Problem<'a> {
    x: &'a [SparseVec],
    y: Vec<usize>,
    n_features: usize,
    n_classes: usize,
    lambda: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.n_classes * (self.n_features + 1)
    }

    /// Objective and gradient; parameters are `[W (C × F) row-major, b (C)]`.
    fn eval(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        let (c, f) = (self.n_classes, self.n_features);
        let (w, b) = p.split_at(c * f);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = self.x.len() as f64;
        let mut loss = 0.0;
        let mut scores = vec![0.0; c];
        for (row, &yi) in self.x.iter().zip(&self.y) {
            for k in 0..c {
                let wk = &w[k * f..(k + 1) * f];
                scores[k] = b[k] + row.iter().map(|(j, v)| wk[*j as usize] * v).sum::<f64>();
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            loss += z.ln() + max - scores[yi];
            for k in 0..c {
                let pk = (scores[k] - max).exp() / z;
                let d = (pk - if k == yi { 1.0 } else { 0.0 }) / n;
                let gk = &mut grad[k * f..(k + 1) * f];
                for (j, v) in row {
                    gk[*j as usize] += d * v;
                }
                grad[c * f + k] += d;
            }
        }
        let mut reg = 0.0;
        for (g, wi) in grad[..c * f].iter_mut().zip(w) {
            *g += self.lambda * wi;
            reg += wi * wi;
        }
        loss / n + 0.5 * self.lambda * reg
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimise with limited-memory BFGS and a backtracking Armijo line search.
/// Returns `(params, iterations, final gradient norm)`.
fn lbfgs(problem: &Problem<'_>, cfg: &LogRegConfig) -> (Vec<f64>, usize, f64) {
    let d = problem.dim();
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut fx = problem.eval(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut x_new = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut iter = 0;
    while iter < cfg.max_iterations && norm(&g) >= cfg.tolerance {
        iter += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / norm(&g).max(1.0),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let beta = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - beta) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // not a descent direction; restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut f_new;
        loop {
            for i in 0..d {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = problem.eval(&x_new, &mut g_new);
            if f_new <= fx + 1e-4 * step * slope || step < 1e-20 {
                break;
            }
            step *= 0.5;
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 {
            if s_hist.len() == cfg.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        if (fx - f_new).abs() <= f64::EPSILON * fx.abs() && step < 1e-20 {
            break;
        }
        fx = f_new;
    }
    let gn = norm(&g);
    (x, iter, gn)
}

pub fn train_logreg(
    features: &[SparseVec],
    labels: &[MoralLabel],
    n_features: usize,
    config: &LogRegConfig,
) -> Result<LinearClassifier> {
    if features.len() != labels.len() {
        return Err(Error::invalid("features and labels differ in length"));
    }
    let mut present = [false; NUM_LABELS];
    labels.iter().for_each(|l| present[l.index()] = true);
    let classes: Vec<MoralLabel> = MoralLabel::ALL.iter().copied().filter(|l| present[l.index()]).collect();
    if classes.len() < 2 {
        return Err(Error::invalid("logistic regression needs at least two classes"));
    }
    if let Some((_, j)) = features.iter().flatten().find(|(j, _)| *j as usize >= n_features) {
        return Err(Error::invalid(format!("feature index {j} out of range")));
    }
    let mut pos = [usize::MAX; NUM_LABELS];
    for (c, l) in classes.iter().enumerate() {
        pos[l.index()] = c;
    }
    let problem = Problem {
        x: features,
        y: labels.iter().map(|l| pos[l.index()]).collect(),
        n_features,
        n_classes: classes.len(),
        lambda: config.regularization.per_sample(features.len()),
    };
    let (params, iterations, gradient_norm) = lbfgs(&problem, config);
    let (w, b) = params.split_at(classes.len() * n_features);
    let weights: Vec<Vec<f64>> = w.chunks(n_features).map(|r| r.to_vec()).collect();
    if weights.iter().flatten().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("logistic regression diverged".into()));
    }
    Ok(LinearClassifier {
        classes,
        weights,
        bias: b.to_vec(),
        regularization: config.regularization,
        iterations,
        gradient_norm,
    })
}

impl LinearClassifier {
    pub fn scores(&self, x: &SparseVec) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + x.iter().map(|(j, v)| w[*j as usize] * v).sum::<f64>())
            .collect()
    }

    /// Highest-scoring class; ties go to the earliest label.
    pub fn predict(&self, x: &SparseVec) -> MoralLabel {
        let s = self.scores(x);
        let mut best = 0;
        for (i, v) in s.iter().enumerate() {
            if *v > s[best] {
                best = i;
            }
        }
        self.classes[best]
    }

    pub fn predict_all(&self, xs: &[SparseVec]) -> Vec<MoralLabel> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}
