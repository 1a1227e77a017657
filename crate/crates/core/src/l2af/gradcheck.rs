use super::encoder::FeatureEncoder;
use super::model::{BatchRef, L2afModel, LossSpec, WeightGradient, WeightSource};
use super::params::ParamSet;
use crate::error::Result;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub parameters: usize,
    /// `(analytic, numeric)` at the largest relative error.
    pub worst: (f64, f64),
}

impl GradientCheck {
    fn record(&mut self, analytic: f64, numeric: f64, floor: f64) {
        let rel = relative_error(analytic, numeric, floor);
        if rel > self.max_relative_error {
            self.max_relative_error = rel;
            self.worst = (analytic, numeric);
        }
        self.max_absolute_error = self.max_absolute_error.max((analytic - numeric).abs());
        self.parameters += 1;
    }
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// entries whose true gradient is zero from dividing by zero.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Fourth-order central difference of `f` at offset 0.
fn stencil(f: &mut impl FnMut(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((f(-2.0 * h)? - 8.0 * f(-h)? + 8.0 * f(h)? - f(2.0 * h)?) / (12.0 * h))
}

/// Checks every parameter of the encoder and both heads against a
/// fourth-order central difference with step `step`.
///
/// With a stopped weight gradient the analytic gradient is that of the loss
/// with the weights frozen at their current values, so the differences are
/// taken on that frozen-weight loss.
pub fn check_gradients<E: FeatureEncoder>(
    model: &L2afModel<E>,
    batch: BatchRef<'_>,
    spec: &LossSpec<'_>,
    step: f64,
    floor: f64,
) -> Result<GradientCheck> {
    let (parts, grads) = model.joint_loss_and_grad(batch, spec)?;
    let frozen = parts.weights.clone();
    let numeric_spec = if spec.gradient == WeightGradient::Stop && matches!(spec.weights, WeightSource::Head) {
        LossSpec { weights: WeightSource::Fixed(&frozen), normalize: false, ..*spec }
    } else {
        *spec
    };
    let mut probe = model.clone();
    let mut check = GradientCheck { max_relative_error: 0.0, max_absolute_error: 0.0, parameters: 0, worst: (0.0, 0.0) };

    macro_rules! sweep {
        ($field:ident, $grad:expr) => {{
            let analytic: Vec<Vec<f64>> = $grad.tensors().iter().map(|t| t.to_vec()).collect();
            let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
            for (t, &len) in sizes.iter().enumerate() {
                for i in 0..len {
                    let original = probe.$field.tensors()[t][i];
                    let mut at = |offset: f64| -> Result<f64> {
                        probe.$field.tensors_mut()[t][i] = original + offset;
                        Ok(probe.joint_loss(batch, &numeric_spec)?.total)
                    };
                    let numeric = stencil(&mut at, step)?;
                    probe.$field.tensors_mut()[t][i] = original;
                    let a = analytic[t][i];
                    check.record(a, numeric, floor);
                }
            }
        }};
    }

    sweep!(encoder, grads.encoder);
    sweep!(prediction, grads.prediction);
    if probe.weighting.is_some() {
        let analytic: Vec<Vec<f64>> = grads.weighting.tensors().iter().map(|t| t.to_vec()).collect();
        for (t, values) in analytic.iter().enumerate() {
            for (i, &a) in values.iter().enumerate() {
                let original = probe.weighting.as_ref().expect("checked above").tensors()[t][i];
                let mut at = |offset: f64| -> Result<f64> {
                    probe.weighting.as_mut().expect("checked above").tensors_mut()[t][i] = original + offset;
                    Ok(probe.joint_loss(batch, &numeric_spec)?.total)
                };
                let numeric = stencil(&mut at, step)?;
                probe.weighting.as_mut().expect("checked above").tensors_mut()[t][i] = original;
                check.record(a, numeric, floor);
            }
        }
    }
    Ok(check)
}
