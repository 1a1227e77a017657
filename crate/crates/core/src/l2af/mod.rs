//! Instance-weighted adaptation network.
//!
//! A shared encoder turns each document into a feature vector `X`. A
//! prediction head maps `X` to a distribution over the 11 moral labels and a
//! weighting head maps it to the probability that the document belongs to
//! the target domain. Training minimises
//!
//! ```text
//! alpha * BCE(y_d, w(X)) + mean_source( w(X_i) * CE(y_c_i, p(X_i)) )
//! ```
//!
//! so source documents that look like the target domain count more in the
//! label loss. By default `w` is a constant multiplier in the second term
//! (no gradient reaches the weighting head through it); see
//! [`WeightGradient`].

mod encoder;
mod gradcheck;
mod heads;
mod model;
mod optim;
mod params;
mod train;
mod vocab;

pub use encoder::{BiGruCache, BiGruEncoder, EmbeddingInit, EncoderConfig, EncoderKind, FeatureEncoder, GruParams};
pub use gradcheck::{check_gradients, relative_error, GradientCheck};
pub use heads::{argmax, softmax_rows, PredictionHead, WeightingHead, DEFAULT_DROPOUT};
pub use model::{BatchRef, Gradients, L2afModel, LossParts, LossSpec, WeightGradient, WeightSource};
pub use optim::{Optimizer, OptimizerKind};
pub use params::ParamSet;
pub use train::{
    build_model, mean_weight_by_domain, train, train_in_domain, train_model, train_no_adapt, EpochRecord, L2afHyperparams, Phase,
    StepRecord, TrainReport, WeightMode, DEFAULT_MAX_VOCAB,
};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

#[cfg(test)]
mod tests;
