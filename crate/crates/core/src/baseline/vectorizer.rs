use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const MAX_FEATURES: usize = 15_000;
pub const MAX_NGRAM: usize = 3;

/// Sparse row: `(feature index, value)` sorted by index.
pub type SparseVec = Vec<(u32, f64)>;

/// TF-IDF weighted 1–3-gram features over a closed vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vectorizer {
    /// N-grams (tokens joined by a single space), in feature-index order.
    pub features: Vec<String>,
    pub idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

/// All n-grams of orders 1..=max_n, tokens joined by spaces.
pub fn ngrams(tokens: &[String], max_n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=max_n).flat_map(move |n| tokens.windows(n).map(|w| w.join(" ")))
}

impl Vectorizer {
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a [String]>) -> Self {
        Self::fit_with(docs, MAX_FEATURES, MAX_NGRAM)
    }

    /// Keep the `max_features` n-grams with the highest total count across
    /// the corpus (ties broken lexicographically); smooth idf
    /// `ln((1 + N) / (1 + df)) + 1`.
    pub fn fit_with<'a>(docs: impl IntoIterator<Item = &'a [String]>, max_features: usize, max_n: usize) -> Self {
        let mut total: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        let mut n_docs = 0usize;
        for doc in docs {
            n_docs += 1;
            let mut seen: HashMap<String, usize> = HashMap::new();
            for g in ngrams(doc, max_n) {
                *seen.entry(g).or_insert(0) += 1;
            }
            for (g, c) in seen {
                let e = total.entry(g).or_insert((0, 0));
                e.0 += c;
                e.1 += 1;
            }
        }
        let mut ranked: Vec<(String, usize, usize)> = total.into_iter().map(|(g, (c, df))| (g, c, df)).collect();
        // BTreeMap order is lexicographic already; stable sort keeps it for ties.
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        ranked.truncate(max_features);
        let n = n_docs as f64;
        let idf = ranked
            .iter()
            .map(|(_, _, df)| ((1.0 + n) / (1.0 + *df as f64)).ln() + 1.0)
            .collect();
        let features: Vec<String> = ranked.into_iter().map(|(g, _, _)| g).collect();
        let mut v = Self {
            features,
            idf,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_index(&mut self, feature: &str) -> Option<usize> {
        if self.index.len() != self.features.len() {
            self.rebuild_index();
        }
        self.index.get(feature).map(|i| *i as usize)
    }

    /// Raw-count tf × idf, L2-normalised. Unknown n-grams are dropped.
    pub fn transform(&self, tokens: &[String]) -> SparseVec {
        let max_n = self.features.iter().map(|f| f.split(' ').count()).max().unwrap_or(1);
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for g in ngrams(tokens, max_n) {
            if let Some(&i) = self.index.get(&g) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut row: SparseVec = counts
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i as usize]))
            .collect();
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        row
    }

    pub fn transform_all<'a>(&self, docs: impl IntoIterator<Item = &'a [String]>) -> Vec<SparseVec> {
        docs.into_iter().map(|d| self.transform(d)).collect()
    }
}
