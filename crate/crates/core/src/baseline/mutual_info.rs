use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

static STOPWORDS_EN: &str = include_str!("../../resources/stopwords_en.txt");

/// The shipped English stopword list.
pub fn english_stopwords() -> HashSet<&'static str> {
    STOPWORDS_EN.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// Plug-in mutual information (nats) between two binary variables.
pub fn mutual_information(feature: &[bool], label: &[bool]) -> f64 {
    assert_eq!(feature.len(), label.len());
    let n = feature.len();
    if n == 0 {
        return 0.0;
    }
    let mut table = [[0usize; 2]; 2];
    for (f, l) in feature.iter().zip(label) {
        table[*f as usize][*l as usize] += 1;
    }
    mi_from_table(&table, n)
}

fn mi_from_table(table: &[[usize; 2]; 2], n: usize) -> f64 {
    let n = n as f64;
    let row = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let col = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut mi = 0.0;
    for f in 0..2 {
        for l in 0..2 {
            let c = table[f][l];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            mi += pxy * (c as f64 * n / (row[f] as f64 * col[l] as f64)).ln();
        }
    }
    mi.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub mutual_information: f64,
}

/// Rank unigram features by the mutual information between their presence in
/// a document and the binary label. Stopwords are removed before ranking;
/// ties break lexicographically. `candidates` limits the features considered
/// (all unigrams when `None`).
pub fn mutual_info_rank<'a>(
    docs: &[&'a [String]],
    labels: &[bool],
    top_n: usize,
    stopwords: &HashSet<&str>,
    candidates: Option<&BTreeSet<String>>,
) -> Vec<RankedFeature> {
    assert_eq!(docs.len(), labels.len());
    let n = docs.len();
    let positives = labels.iter().filter(|l| **l).count();
    // presence counts: (docs containing, positive docs containing)
    let mut presence: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (doc, &label) in docs.iter().zip(labels) {
        let uniq: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for t in uniq {
            if stopwords.contains(t) || candidates.is_some_and(|c| !c.contains(t)) {
                continue;
            }
            let e = presence.entry(t).or_insert((0, 0));
            e.0 += 1;
            e.1 += label as usize;
        }
    }
    let mut ranked: Vec<RankedFeature> = presence
        .into_iter()
        .map(|(t, (with, with_pos))| {
            let table = [
                [n - positives - (with - with_pos), positives - with_pos],
                [with - with_pos, with_pos],
            ];
            RankedFeature {
                feature: t.to_string(),
                mutual_information: mi_from_table(&table, n),
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.mutual_information.total_cmp(&a.mutual_information));
    ranked.truncate(top_n);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn label_copy_ranks_first() {
        let docs = [toks("god x y"), toks("a x"), toks("god b"), toks("c y")];
        let labels = [true, false, true, false];
        let refs: Vec<&[String]> = docs.iter().map(Vec::as_slice).collect();
        let r = mutual_info_rank(&refs, &labels, 3, &english_stopwords(), None);
        assert_eq!(r[0].feature, "god");
        assert!((r[0].mutual_information - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_has_zero_mi() {
        assert_eq!(mutual_information(&[true; 6], &[true, false, true, false, true, true]), 0.0);
        // independent by construction: each cell of the 2x2 table has 2 entries
        let f = [true, true, false, false, true, true, false, false];
        let l = [true, false, true, false, true, false, true, false];
        assert!(mutual_information(&f, &l).abs() < 1e-12);
    }

    #[test]
    fn stopwords_are_removed() {
        let sw = english_stopwords();
        assert!(sw.contains("the") && sw.contains("don't"));
        let docs = [toks("the moral"), toks("the plain")];
        let refs: Vec<&[String]> = docs.iter().map(Vec::as_slice).collect();
        let r = mutual_info_rank(&refs, &[true, false], 10, &sw, None);
        assert!(r.iter().all(|f| f.feature != "the"));
    }
}
