//! The classical cross-domain baseline: TF-IDF n-grams into a regularised
//! multinomial logistic regression, the train-on-one/test-on-all grid, F1
//! metrics and mutual-information feature ranking.

mod logreg;
mod metrics;
mod mutual_info;
mod vectorizer;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Document, MoralLabel};
use crate::error::{Error, Result};
use crate::seed;
use crate::shift_analysis::{matrix_csv, write_heatmap, write_text};

pub use logreg::{train_logreg, LinearClassifier, LogRegConfig, Regularization};
pub use metrics::{f1_score, f1_scores, Averaging, F1Scores};
pub use mutual_info::{english_stopwords, mutual_info_rank, mutual_information, RankedFeature};
pub use vectorizer::{ngrams, SparseVec, Vectorizer, MAX_FEATURES, MAX_NGRAM};

/// Minimum documents per domain for the cross-domain grid.
pub const MIN_GRID_DOCS: usize = 10;

/// Vectorizer plus classifier, fitted together on one document set.
#[derive(Debug, Clone)]
pub struct TfidfClassifier {
    pub vectorizer: Vectorizer,
    pub classifier: LinearClassifier,
}

impl TfidfClassifier {
    pub fn fit(docs: &[&Document], config: &LogRegConfig) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::invalid("cannot fit on an empty document set"));
        }
        let vectorizer = Vectorizer::fit(docs.iter().map(|d| d.tokens.as_slice()));
        let x = vectorizer.transform_all(docs.iter().map(|d| d.tokens.as_slice()));
        let y: Vec<MoralLabel> = docs.iter().map(|d| d.label).collect();
        let classifier = train_logreg(&x, &y, vectorizer.len(), config)?;
        Ok(Self { vectorizer, classifier })
    }

    pub fn predict(&self, docs: &[&Document]) -> Vec<MoralLabel> {
        docs.iter()
            .map(|d| self.classifier.predict(&self.vectorizer.transform(&d.tokens)))
            .collect()
    }

    pub fn evaluate(&self, docs: &[&Document]) -> F1Scores {
        let gold: Vec<MoralLabel> = docs.iter().map(|d| d.label).collect();
        f1_scores(&gold, &self.predict(docs))
    }
}

/// F1 of a classifier trained on each domain (rows) and tested on each
/// domain (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub domains: Vec<String>,
    pub f1: Vec<Vec<F1Scores>>,
    pub split_seed: u64,
}

impl GridReport {
    /// Macro F1 for `(train, test)`.
    pub fn get(&self, train: &str, test: &str) -> Option<f64> {
        let i = self.domains.iter().position(|d| d == train)?;
        let j = self.domains.iter().position(|d| d == test)?;
        Some(self.f1[i][j].macro_f1)
    }

    pub fn matrix(&self, avg: Averaging) -> Vec<Vec<f64>> {
        self.f1.iter().map(|r| r.iter().map(|s| s.get(avg)).collect()).collect()
    }

    /// Mean of the diagonal and of the off-diagonal cells.
    pub fn in_out_means(&self, avg: Averaging) -> (f64, f64) {
        let m = self.matrix(avg);
        let n = m.len();
        let diag = (0..n).map(|i| m[i][i]).sum::<f64>() / n as f64;
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j]).sum();
        (diag, off / (n * (n - 1)) as f64)
    }

    pub fn to_csv(&self, avg: Averaging) -> String {
        matrix_csv(&self.domains, &self.domains, &self.matrix(avg))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, avg: Averaging) -> Result<()> {
        write_text(path, &self.to_csv(avg))
    }

    pub fn write_heatmap(&self, path: impl AsRef<Path>) -> Result<()> {
        write_heatmap(&self.matrix(Averaging::Macro), path)
    }
}

/// Seeded 80/20 split of one domain: `(train, test)`.
pub fn split_domain<'a>(dataset: &'a Dataset, domain: &str, split_seed: u64) -> (Vec<&'a Document>, Vec<&'a Document>) {
    let mut docs: Vec<&Document> = dataset.documents().iter().filter(|d| d.domain == domain).collect();
    let mut rng = seed::rng(split_seed, &format!("grid/split/{domain}"));
    docs.shuffle(&mut rng);
    let n_test = (docs.len() as f64 * 0.2).round() as usize;
    let test = docs.split_off(docs.len() - n_test);
    (docs, test)
}

/// Train on each domain's 80% split, evaluate on every domain's 20% split.
/// One split per domain is reused across all pairs.
pub fn cross_domain_grid(dataset: &Dataset, split_seed: u64, config: &LogRegConfig) -> Result<GridReport> {
    let domains = dataset.domains().to_vec();
    if domains.len() < 2 {
        return Err(Error::invalid("cross-domain grid needs at least two domains"));
    }
    let mut splits = Vec::with_capacity(domains.len());
    for d in &domains {
        let n = dataset.domain_documents(d).count();
        if n < MIN_GRID_DOCS {
            return Err(Error::invalid(format!(
                "domain `{d}` has {n} documents; the grid needs at least {MIN_GRID_DOCS}"
            )));
        }
        splits.push(split_domain(dataset, d, split_seed));
    }
    let mut f1 = Vec::with_capacity(domains.len());
    for (train, _) in &splits {
        let model = TfidfClassifier::fit(train, config)?;
        f1.push(splits.iter().map(|(_, test)| model.evaluate(test)).collect());
    }
    Ok(GridReport {
        domains,
        f1,
        split_seed,
    })
}

/// Top unigrams of one domain by mutual information with the binarised
/// label (moral vs no-moral). Candidates are the unigrams among the domain's
/// most frequent n-gram features.
pub fn top_features(dataset: &Dataset, domain: &str, top_n: usize) -> Result<Vec<RankedFeature>> {
    let docs: Vec<&Document> = dataset.domain_documents(domain).collect();
    if docs.is_empty() {
        return Err(Error::EmptyDomain(domain.to_string()));
    }
    let tokens: Vec<&[String]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
    let vectorizer = Vectorizer::fit(tokens.iter().copied());
    let candidates: BTreeSet<String> = vectorizer
        .features
        .iter()
        .filter(|f| !f.contains(' '))
        .cloned()
        .collect();
    let labels: Vec<bool> = docs.iter().map(|d| d.label != MoralLabel::NoMoral).collect();
    Ok(mutual_info_rank(&tokens, &labels, top_n, &english_stopwords(), Some(&candidates)))
}

/// Two-column TSV: rank (from 1) and feature.
pub fn features_tsv(features: &[RankedFeature]) -> String {
    let mut s = String::from("rank\tngram\n");
    for (i, f) in features.iter().enumerate() {
        let _ = writeln!(s, "{}\t{}", i + 1, f.feature);
    }
    s
}
