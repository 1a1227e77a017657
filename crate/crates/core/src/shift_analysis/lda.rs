//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdaConfig {
    pub num_topics: usize,
    pub iterations: usize,
    /// Number of final sweeps whose estimates are averaged.
    pub averaging: usize,
    /// Symmetric document-topic prior; `None` means 50 / K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            num_topics: 20,
            iterations: 1000,
            averaging: 100,
            alpha: None,
            beta: 0.01,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn with_topics(num_topics: usize) -> Self {
        Self {
            num_topics,
            ..Self::default()
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.num_topics as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub num_topics: usize,
    pub vocabulary: Vec<String>,
    /// K × V, each row a distribution over the vocabulary.
    pub word_topic: Vec<Vec<f64>>,
    /// One K-dim distribution P(Z|D) per document, in dataset order.
    pub doc_topic: Vec<Vec<f64>>,
    /// `(domain, id)` of each row of `doc_topic`.
    pub doc_keys: Vec<(String, String)>,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

/// Fit LDA on every document of `dataset`. Deterministic given `config.seed`.
pub fn fit_lda(dataset: &Dataset, config: &LdaConfig) -> Result<TopicModel> {
    let k = config.num_topics;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot fit a topic model on an empty dataset"));
    }
    if k < 2 {
        return Err(Error::invalid("topic model needs at least 2 topics"));
    }
    if config.iterations == 0 {
        return Err(Error::invalid("topic model needs at least one iteration"));
    }

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for d in dataset.documents() {
        for t in &d.tokens {
            index.entry(t.as_str()).or_insert(0);
        }
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    let v = index.len();
    if k > v {
        return Err(Error::invalid(format!(
            "{k} topics exceed the vocabulary size {v}"
        )));
    }
    let vocabulary: Vec<String> = index.keys().map(|s| s.to_string()).collect();
    let docs: Vec<Vec<usize>> = dataset
        .documents()
        .iter()
        .map(|d| d.tokens.iter().map(|t| index[t.as_str()]).collect())
        .collect();

    let alpha = config.alpha();
    let beta = config.beta;
    let vbeta = v as f64 * beta;
    let mut rng = seed::rng(config.seed, "lda/gibbs");

    let mut n_dk = vec![vec![0u32; k]; docs.len()];
    let mut n_kw = vec![0u32; k * v];
    let mut n_k = vec![0u32; k];
    let mut z: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, words)| {
            words
                .iter()
                .map(|&w| {
                    let t = rng.random_range(0..k);
                    n_dk[d][t] += 1;
                    n_kw[t * v + w] += 1;
                    n_k[t] += 1;
                    t
                })
                .collect()
        })
        .collect();

    let averaging = config.averaging.clamp(1, config.iterations);
    let mut theta_acc = vec![vec![0.0; k]; docs.len()];
    let mut phi_acc = vec![0.0; k * v];
    let mut p = vec![0.0; k];

    for iter in 0..config.iterations {
        for (d, words) in docs.iter().enumerate() {
            let nd = &mut n_dk[d];
            for (i, &w) in words.iter().enumerate() {
                let old = z[d][i];
                nd[old] -= 1;
                n_kw[old * v + w] -= 1;
                n_k[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (nd[t] as f64 + alpha) * (n_kw[t * v + w] as f64 + beta)
                        / (n_k[t] as f64 + vbeta);
                    p[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = p.partition_point(|&c| c <= u).min(k - 1);

                z[d][i] = new;
                nd[new] += 1;
                n_kw[new * v + w] += 1;
                n_k[new] += 1;
            }
        }
        if iter + averaging >= config.iterations {
            for (d, words) in docs.iter().enumerate() {
                let denom = words.len() as f64 + k as f64 * alpha;
                for t in 0..k {
                    theta_acc[d][t] += (n_dk[d][t] as f64 + alpha) / denom;
                }
            }
            for t in 0..k {
                let denom = n_k[t] as f64 + vbeta;
                for w in 0..v {
                    phi_acc[t * v + w] += (n_kw[t * v + w] as f64 + beta) / denom;
                }
            }
        }
    }

    let doc_topic = theta_acc.into_iter().map(normalized).collect();
    let word_topic = phi_acc.chunks(v).map(|row| normalized(row.to_vec())).collect();
    Ok(TopicModel {
        num_topics: k,
        vocabulary,
        word_topic,
        doc_topic,
        doc_keys: dataset
            .documents()
            .iter()
            .map(|d| (d.domain.clone(), d.id.clone()))
            .collect(),
        alpha,
        beta,
        seed: config.seed,
    })
}

fn normalized(mut row: Vec<f64>) -> Vec<f64> {
    let z: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= z);
    row
}

impl TopicModel {
    /// Mean of the per-document topic distributions over one domain. The
    /// dataset must be the one the model was fitted on.
    pub fn domain_topic_distribution(&self, dataset: &Dataset, domain: &str) -> Result<Vec<f64>> {
        if dataset.len() != self.doc_topic.len() {
            return Err(Error::invalid("topic model was fitted on a different dataset"));
        }
        let mut mean = vec![0.0; self.num_topics];
        let mut n = 0usize;
        for (row, (doc, key)) in self
            .doc_topic
            .iter()
            .zip(dataset.documents().iter().zip(&self.doc_keys))
        {
            if doc.domain != key.0 || doc.id != key.1 {
                return Err(Error::invalid("topic model was fitted on a different dataset"));
            }
            if doc.domain == domain {
                n += 1;
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
        }
        if n == 0 {
            return Err(Error::EmptyDomain(domain.to_string()));
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        Ok(mean)
    }
}
