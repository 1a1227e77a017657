use serde::{Deserialize, Serialize};

use super::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OptimizerKind {
    Adam,
    /// Adam with decoupled weight decay.
    AdamW { weight_decay: f64 },
    RmsProp,
}

/// First-order optimiser whose state mirrors one parameter set.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const RMS_DECAY: f64 = 0.99;
const EPS: f64 = 1e-8;
// Small enough that rescaling the loss by a constant leaves RMSprop steps
// unchanged to within rounding.
const RMS_EPS: f64 = 1e-10;

impl Optimizer {
    pub fn new<P: ParamSet>(kind: OptimizerKind, lr: f64, params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { kind, lr, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let t = self.step as i32;
        let (bc1, bc2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        let lr = self.lr;
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(&mut self.m).zip(&mut self.v) {
            match self.kind {
                OptimizerKind::RmsProp => {
                    for i in 0..p.len() {
                        v[i] = RMS_DECAY * v[i] + (1.0 - RMS_DECAY) * g[i] * g[i];
                        p[i] -= lr * g[i] / (v[i].sqrt() + RMS_EPS);
                    }
                }
                OptimizerKind::Adam | OptimizerKind::AdamW { .. } => {
                    let decay = match self.kind {
                        OptimizerKind::AdamW { weight_decay } => weight_decay,
                        _ => 0.0,
                    };
                    for i in 0..p.len() {
                        p[i] *= 1.0 - lr * decay;
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Quad(Vec<f64>);

    impl ParamSet for Quad {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
        fn zeros_like(&self) -> Self {
            Quad(vec![0.0; self.0.len()])
        }
    }

    #[test]
    fn all_kinds_descend_a_quadratic() {
        for kind in [OptimizerKind::Adam, OptimizerKind::AdamW { weight_decay: 0.01 }, OptimizerKind::RmsProp] {
            let mut p = Quad(vec![3.0, -2.0]);
            let mut opt = Optimizer::new(kind, 0.05, &p);
            for _ in 0..2000 {
                let g = Quad(p.0.iter().map(|x| 2.0 * x).collect());
                opt.step(&mut p, &g);
            }
            assert!(p.0.iter().all(|x| x.abs() < 0.05), "{kind:?}: {:?}", p.0);
        }
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = Quad(vec![1.0]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, &p);
        opt.step(&mut p, &Quad(vec![5.0]));
        assert!((p.0[0] - 0.9).abs() < 1e-6);
    }
}
