//! Quantifying domain shift: per-domain topic and label distributions,
//! cosine-similarity matrices, and the tests linking shift to performance.

mod lda;
pub mod stats;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::GridReport;
use crate::corpus::Dataset;
use crate::error::{Error, Result};

pub use lda::{fit_lda, LdaConfig, TopicModel};
pub use stats::{
    cosine_similarity, normality_test, performance_variation, regression_ttest, spearman_test,
    NormalityResult, OlsFit, SpearmanResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    /// Mean topic distributions from a fitted topic model.
    Topic,
    /// All 11 label proportions.
    Label,
    /// The 10 moral-label proportions, no-moral removed.
    MoralLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub domains: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub kind: SimilarityKind,
}

impl SimilarityMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.domains.iter().position(|d| d == a)?;
        let j = self.domains.iter().position(|d| d == b)?;
        Some(self.values[i][j])
    }

    /// Upper-triangle entries `(i, j, value)` with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize, f64)> {
        let n = self.domains.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                out.push((i, j, self.values[i][j]));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.domains, &self.domains, &self.values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn write_heatmap(&self, path: impl AsRef<Path>) -> Result<()> {
        write_heatmap(&self.values, path)
    }
}

/// Per-domain vectors for `kind`, in dataset domain order.
pub fn domain_vectors(dataset: &Dataset, model: Option<&TopicModel>, kind: SimilarityKind) -> Result<Vec<Vec<f64>>> {
    dataset
        .domains()
        .iter()
        .map(|d| match kind {
            SimilarityKind::Label => dataset.label_distribution(d).map(|v| v.to_vec()),
            SimilarityKind::MoralLabel => dataset.moral_label_distribution(d).map(|v| v.to_vec()),
            SimilarityKind::Topic => model
                .ok_or_else(|| Error::invalid("topic similarity needs a fitted topic model"))?
                .domain_topic_distribution(dataset, d),
        })
        .collect()
}

/// Pairwise cosine similarities between the domains of `dataset`.
pub fn similarity_matrix(dataset: &Dataset, model: Option<&TopicModel>, kind: SimilarityKind) -> Result<SimilarityMatrix> {
    if dataset.domains().len() < 2 {
        return Err(Error::invalid("similarity matrix needs at least two domains"));
    }
    let vectors = domain_vectors(dataset, model, kind)?;
    let n = vectors.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s = if i == j {
                // still validates the vector is non-zero
                cosine_similarity(&vectors[i], &vectors[j])?;
                1.0
            } else {
                cosine_similarity(&vectors[i], &vectors[j])?.clamp(0.0, 1.0)
            };
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    Ok(SimilarityMatrix {
        domains: dataset.domains().to_vec(),
        values,
        kind,
    })
}

/// Regression of performance variation on domain variation over the
/// off-diagonal cells of a cross-domain grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceModel {
    pub observations: usize,
    pub normality_p_domain: Option<f64>,
    pub normality_p_performance: Option<f64>,
    /// `perf ~ (topic_var + label_var)`.
    pub combined: OlsFit,
    /// `perf ~ topic_var + label_var`.
    pub joint: OlsFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftTestReport {
    /// Number of unordered domain pairs.
    pub pairs: usize,
    /// `None` when fewer than 20 pairs are available.
    pub normality_p_topic: Option<f64>,
    pub normality_p_label: Option<f64>,
    pub spearman_rho: f64,
    pub spearman_p: f64,
    pub performance: Option<PerformanceModel>,
}

impl ShiftTestReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn optional_normality(samples: &[f64]) -> Option<f64> {
    normality_test(samples).ok().map(|r| r.p_value)
}

/// Domain variation of a pair is `1 − cosine similarity`.
pub fn shift_tests(topic: &SimilarityMatrix, label: &SimilarityMatrix, grid: Option<&GridReport>) -> Result<ShiftTestReport> {
    if topic.domains != label.domains {
        return Err(Error::invalid("topic and label matrices cover different domains"));
    }
    let topic_var: Vec<f64> = topic.pairs().iter().map(|p| 1.0 - p.2).collect();
    let label_var: Vec<f64> = label.pairs().iter().map(|p| 1.0 - p.2).collect();
    let sp = spearman_test(&label_var, &topic_var)?;

    let performance = match grid {
        None => None,
        Some(g) => Some(performance_model(topic, label, g)?),
    };
    Ok(ShiftTestReport {
        pairs: topic_var.len(),
        normality_p_topic: optional_normality(&topic_var),
        normality_p_label: optional_normality(&label_var),
        spearman_rho: sp.rho,
        spearman_p: sp.p_value,
        performance,
    })
}

fn performance_model(topic: &SimilarityMatrix, label: &SimilarityMatrix, grid: &GridReport) -> Result<PerformanceModel> {
    let domains = &topic.domains;
    let mut tv = Vec::new();
    let mut lv = Vec::new();
    let mut perf = Vec::new();
    for (i, train) in domains.iter().enumerate() {
        let in_score = grid
            .get(train, train)
            .ok_or_else(|| Error::invalid(format!("grid lacks domain `{train}`")))?;
        for (j, test) in domains.iter().enumerate() {
            if i == j {
                continue;
            }
            let out_score = grid
                .get(train, test)
                .ok_or_else(|| Error::invalid(format!("grid lacks domain `{test}`")))?;
            tv.push(1.0 - topic.values[i][j]);
            lv.push(1.0 - label.values[i][j]);
            perf.push(performance_variation(in_score, out_score));
        }
    }
    let summed: Vec<f64> = tv.iter().zip(&lv).map(|(a, b)| a + b).collect();
    Ok(PerformanceModel {
        observations: perf.len(),
        normality_p_domain: optional_normality(&summed),
        normality_p_performance: optional_normality(&perf),
        combined: regression_ttest(std::slice::from_ref(&summed), &perf)?,
        joint: regression_ttest(&[tv, lv], &perf)?,
    })
}

pub(crate) fn matrix_csv(rows: &[String], cols: &[String], values: &[Vec<f64>]) -> String {
    let mut s = String::from("domain");
    for c in cols {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for (r, row) in rows.iter().zip(values) {
        s.push_str(r);
        for v in row {
            let _ = write!(s, ",{v:.6}");
        }
        s.push('\n');
    }
    s
}

pub(crate) fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Render a square matrix with values in [0, 1] as a PNG, one 32 px cell per
/// entry, white for 0 and dark blue for 1.
pub(crate) fn write_heatmap(values: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    const CELL: u32 = 32;
    let rows = values.len() as u32;
    let cols = values.first().map_or(0, |r| r.len()) as u32;
    let img = image::RgbImage::from_fn(cols * CELL, rows * CELL, |x, y| {
        let v = values[(y / CELL) as usize][(x / CELL) as usize].clamp(0.0, 1.0);
        let lerp = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
        image::Rgb([lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0)])
    });
    let path = path.as_ref();
    img.save(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, MoralLabel};

    fn doc(id: &str, domain: &str, label: MoralLabel) -> Document {
        Document {
            id: id.into(),
            domain: domain.into(),
            tokens: vec!["a".into(), "b".into(), "c".into()],
            label,
        }
    }

    #[test]
    fn identical_domains_have_unit_similarity() {
        let ds = Dataset::new(vec![
            doc("1", "x", MoralLabel::Care),
            doc("2", "x", MoralLabel::Harm),
            doc("1", "y", MoralLabel::Harm),
            doc("2", "y", MoralLabel::Care),
        ]);
        let m = similarity_matrix(&ds, None, SimilarityKind::Label).unwrap();
        assert!((m.values[0][1] - 1.0).abs() < 1e-9);
        assert_eq!(m.values[0][0], 1.0);
    }

    #[test]
    fn disjoint_label_support_is_orthogonal() {
        let ds = Dataset::new(vec![doc("1", "x", MoralLabel::Care), doc("1", "y", MoralLabel::Harm)]);
        let m = similarity_matrix(&ds, None, SimilarityKind::Label).unwrap();
        assert_eq!(m.values[0][1], 0.0);
        assert!(similarity_matrix(&ds, None, SimilarityKind::Topic).is_err());
        let one = Dataset::new(vec![doc("1", "x", MoralLabel::Care)]);
        assert!(similarity_matrix(&one, None, SimilarityKind::Label).is_err());
    }

    #[test]
    fn csv_has_header_of_domains() {
        let ds = Dataset::new(vec![doc("1", "x", MoralLabel::Care), doc("1", "y", MoralLabel::Care)]);
        let csv = similarity_matrix(&ds, None, SimilarityKind::Label).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("domain,x,y"));
        assert_eq!(lines.next(), Some("x,1.000000,1.000000"));
    }
}
