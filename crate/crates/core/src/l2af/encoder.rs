use std::collections::HashMap;
use std::path::PathBuf;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::params::{normal2, slice1, slice1_mut, slice2, slice2_mut, uniform1, uniform2, ParamSet};
use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Bidirectional GRU over word embeddings.
    #[default]
    BiGru,
    /// A contextual encoder supplied by the caller through [`FeatureEncoder`].
    Contextual,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bigru" | "bi-gru" | "rnn" => Ok(Self::BiGru),
            "contextual" => Ok(Self::Contextual),
            other => Err(Error::Config(format!("unknown encoder `{other}` (expected bi-gru or contextual)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "path")]
pub enum EmbeddingInit {
    #[default]
    Random,
    /// Whitespace-separated text table, one `word v1 .. vE` row per line.
    Pretrained(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Filled in from the vocabulary when a model is built.
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub encoder_kind: EncoderKind,
    pub max_len: usize,
    pub embedding_init: EmbeddingInit,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            embedding_dim: 32,
            hidden_dim: 32,
            encoder_kind: EncoderKind::BiGru,
            max_len: 60,
            embedding_init: EmbeddingInit::Random,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 || self.embedding_dim == 0 || self.hidden_dim == 0 || self.vocab_size == 0 {
            return Err(Error::Config("encoder dimensions and max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Anything that maps token-id sequences to a feature matrix and can
/// back-propagate into its own parameters.
pub trait FeatureEncoder: ParamSet {
    type Cache;

    fn kind(&self) -> EncoderKind;
    fn output_dim(&self) -> usize;
    fn encode(&self, seqs: &[Vec<usize>]) -> Result<(Array2<f64>, Self::Cache)>;
    /// Gradient of the parameters given the gradient of the features.
    fn backward(&self, cache: &Self::Cache, d_features: &Array2<f64>) -> Self;
}

/// GRU weights with gates stacked as `[reset | update | candidate]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b_x: Array1<f64>,
    pub b_h: Array1<f64>,
}

impl GruParams {
    fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        Self {
            w_x: uniform2(input, 3 * hidden, k, rng),
            w_h: uniform2(hidden, 3 * hidden, k, rng),
            b_x: uniform1(3 * hidden, k, rng),
            b_h: uniform1(3 * hidden, k, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w_x: Array2::zeros(self.w_x.raw_dim()),
            w_h: Array2::zeros(self.w_h.raw_dim()),
            b_x: Array1::zeros(self.b_x.len()),
            b_h: Array1::zeros(self.b_h.len()),
        }
    }

    fn hidden(&self) -> usize {
        self.w_h.nrows()
    }
}

struct Step {
    h_prev: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    ghn: Array2<f64>,
}

pub struct GruCache {
    x: Array2<f64>,
    mask: Array2<bool>,
    steps: Vec<Step>,
}

/// Runs the recurrence over step-major inputs (`row = t * batch + b`).
/// Masked positions carry the previous state through unchanged.
fn gru_forward(p: &GruParams, x: Array2<f64>, mask: Array2<bool>) -> (Array2<f64>, GruCache) {
    let (steps_n, batch) = mask.dim();
    let h_dim = p.hidden();
    let mut gx = x.dot(&p.w_x);
    gx += &p.b_x;
    let mut h = Array2::<f64>::zeros((batch, h_dim));
    let mut steps = Vec::with_capacity(steps_n);
    for t in 0..steps_n {
        let gxt = gx.slice(s![t * batch..(t + 1) * batch, ..]);
        let mut gh = h.dot(&p.w_h);
        gh += &p.b_h;
        let mut r = Array2::zeros((batch, h_dim));
        let mut z = Array2::zeros((batch, h_dim));
        let mut n = Array2::zeros((batch, h_dim));
        let mut ghn = Array2::zeros((batch, h_dim));
        let mut h_new = h.clone();
        for b in 0..batch {
            if !mask[[t, b]] {
                continue;
            }
            for j in 0..h_dim {
                let rv = super::params::sigmoid(gxt[[b, j]] + gh[[b, j]]);
                let zv = super::params::sigmoid(gxt[[b, h_dim + j]] + gh[[b, h_dim + j]]);
                let hn = gh[[b, 2 * h_dim + j]];
                let nv = (gxt[[b, 2 * h_dim + j]] + rv * hn).tanh();
                r[[b, j]] = rv;
                z[[b, j]] = zv;
                n[[b, j]] = nv;
                ghn[[b, j]] = hn;
                h_new[[b, j]] = (1.0 - zv) * nv + zv * h[[b, j]];
            }
        }
        steps.push(Step { h_prev: std::mem::replace(&mut h, h_new), r, z, n, ghn });
    }
    (h, GruCache { x, mask, steps })
}

fn gru_backward(p: &GruParams, cache: &GruCache, dh_final: &Array2<f64>) -> (GruParams, Array2<f64>) {
    let (steps_n, batch) = cache.mask.dim();
    let h_dim = p.hidden();
    let mut grads = p.zeros_like();
    let mut dgx_all = Array2::<f64>::zeros((steps_n * batch, 3 * h_dim));
    let mut dh = dh_final.clone();
    let mut dgh = Array2::<f64>::zeros((batch, 3 * h_dim));
    for t in (0..steps_n).rev() {
        let st = &cache.steps[t];
        let mut dgx = dgx_all.slice_mut(s![t * batch..(t + 1) * batch, ..]);
        dgh.fill(0.0);
        let mut dh_prev = Array2::<f64>::zeros((batch, h_dim));
        for b in 0..batch {
            if !cache.mask[[t, b]] {
                for j in 0..h_dim {
                    dh_prev[[b, j]] = dh[[b, j]];
                }
                continue;
            }
            for j in 0..h_dim {
                let g = dh[[b, j]];
                let (r, z, n, hn) = (st.r[[b, j]], st.z[[b, j]], st.n[[b, j]], st.ghn[[b, j]]);
                let dan = g * (1.0 - z) * (1.0 - n * n);
                let daz = g * (st.h_prev[[b, j]] - n) * z * (1.0 - z);
                let dar = dan * hn * r * (1.0 - r);
                dgx[[b, j]] = dar;
                dgx[[b, h_dim + j]] = daz;
                dgx[[b, 2 * h_dim + j]] = dan;
                dgh[[b, j]] = dar;
                dgh[[b, h_dim + j]] = daz;
                dgh[[b, 2 * h_dim + j]] = dan * r;
                dh_prev[[b, j]] = g * z;
            }
        }
        general_mat_mul(1.0, &st.h_prev.t(), &dgh, 1.0, &mut grads.w_h);
        grads.b_h += &dgh.sum_axis(Axis(0));
        general_mat_mul(1.0, &dgh, &p.w_h.t(), 1.0, &mut dh_prev);
        dh = dh_prev;
    }
    general_mat_mul(1.0, &cache.x.t(), &dgx_all, 0.0, &mut grads.w_x);
    grads.b_x = dgx_all.sum_axis(Axis(0));
    let dx = dgx_all.dot(&p.w_x.t());
    (grads, dx)
}

/// Embedding table shared by a forward and a backward GRU; the features are
/// the two final states concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiGruEncoder {
    pub embedding: Array2<f64>,
    pub forward: GruParams,
    pub backward: GruParams,
    pub max_len: usize,
}

pub struct BiGruCache {
    fwd_ids: Vec<usize>,
    bwd_ids: Vec<usize>,
    mask: Array2<bool>,
    fwd: GruCache,
    bwd: GruCache,
}

impl BiGruEncoder {
    /// Parameters drawn from `rng`; a pretrained table overrides rows of the
    /// words it covers.
    pub fn new(config: &EncoderConfig, vocab: &Vocabulary, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if config.encoder_kind != EncoderKind::BiGru {
            return Err(Error::Config(
                "the built-in encoder is bi-gru; contextual encoders are supplied through FeatureEncoder".into(),
            ));
        }
        let mut embedding = normal2(config.vocab_size, config.embedding_dim, rng);
        embedding.row_mut(PAD).fill(0.0);
        if let EmbeddingInit::Pretrained(path) = &config.embedding_init {
            let table = read_embedding_table(path, config.embedding_dim)?;
            for (i, tok) in vocab.tokens().iter().enumerate().skip(PAD + 1) {
                if let Some(v) = table.get(tok) {
                    embedding.row_mut(i).assign(&ndarray::ArrayView1::from(v.as_slice()));
                }
            }
        }
        let forward = GruParams::init(config.embedding_dim, config.hidden_dim, rng);
        let backward = GruParams::init(config.embedding_dim, config.hidden_dim, rng);
        Ok(Self { embedding, forward, backward, max_len: config.max_len })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    fn gather(&self, ids: &[usize]) -> Array2<f64> {
        let e = self.embedding.ncols();
        let mut x = Array2::zeros((ids.len(), e));
        for (row, &id) in ids.iter().enumerate() {
            x.row_mut(row).assign(&self.embedding.row(id));
        }
        x
    }
}

impl ParamSet for BiGruEncoder {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![slice2(&self.embedding)];
        for g in [&self.forward, &self.backward] {
            out.extend([slice2(&g.w_x), slice2(&g.w_h), slice1(&g.b_x), slice1(&g.b_h)]);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![slice2_mut(&mut self.embedding)];
        for g in [&mut self.forward, &mut self.backward] {
            out.push(slice2_mut(&mut g.w_x));
            out.push(slice2_mut(&mut g.w_h));
            out.push(slice1_mut(&mut g.b_x));
            out.push(slice1_mut(&mut g.b_h));
        }
        out
    }

    fn zeros_like(&self) -> Self {
        Self {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            forward: self.forward.zeros_like(),
            backward: self.backward.zeros_like(),
            max_len: self.max_len,
        }
    }
}

impl FeatureEncoder for BiGruEncoder {
    type Cache = BiGruCache;

    fn kind(&self) -> EncoderKind {
        EncoderKind::BiGru
    }

    fn output_dim(&self) -> usize {
        2 * self.forward.hidden()
    }

    fn encode(&self, seqs: &[Vec<usize>]) -> Result<(Array2<f64>, BiGruCache)> {
        let batch = seqs.len();
        let vocab = self.vocab_size();
        let mut steps = 0;
        for s in seqs {
            if s.is_empty() {
                return Err(Error::invalid("cannot encode an empty token sequence"));
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= vocab) {
                return Err(Error::invalid(format!("token index {bad} out of range for vocabulary of {vocab}")));
            }
            steps = steps.max(s.len().min(self.max_len));
        }
        let mut fwd_ids = vec![PAD; steps * batch];
        let mut bwd_ids = vec![PAD; steps * batch];
        let mut mask = Array2::from_elem((steps, batch), false);
        for (b, s) in seqs.iter().enumerate() {
            let s = &s[..s.len().min(self.max_len)];
            for (t, &id) in s.iter().enumerate() {
                fwd_ids[t * batch + b] = id;
                bwd_ids[t * batch + b] = s[s.len() - 1 - t];
                mask[[t, b]] = true;
            }
        }
        let (hf, fwd) = gru_forward(&self.forward, self.gather(&fwd_ids), mask.clone());
        let (hb, bwd) = gru_forward(&self.backward, self.gather(&bwd_ids), mask.clone());
        let features = ndarray::concatenate(Axis(1), &[hf.view(), hb.view()]).expect("matching batch rows");
        Ok((features, BiGruCache { fwd_ids, bwd_ids, mask, fwd, bwd }))
    }

    fn backward(&self, cache: &BiGruCache, d_features: &Array2<f64>) -> Self {
        let h = self.forward.hidden();
        let (gf, dxf) = gru_backward(&self.forward, &cache.fwd, &d_features.slice(s![.., ..h]).to_owned());
        let (gb, dxb) = gru_backward(&self.backward, &cache.bwd, &d_features.slice(s![.., h..]).to_owned());
        let mut embedding = Array2::zeros(self.embedding.raw_dim());
        let batch = cache.mask.ncols();
        for (ids, dx) in [(&cache.fwd_ids, &dxf), (&cache.bwd_ids, &dxb)] {
            for (row, &id) in ids.iter().enumerate() {
                if cache.mask[[row / batch, row % batch]] {
                    let mut target = embedding.row_mut(id);
                    target += &dx.row(row);
                }
            }
        }
        Self { embedding, forward: gf, backward: gb, max_len: self.max_len }
    }
}

fn read_embedding_table(path: &std::path::Path, dim: usize) -> Result<HashMap<String, Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() })?;
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        table.insert(word.to_string(), values);
    }
    Ok(table)
}
