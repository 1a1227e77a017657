//! Annotated multi-domain corpora: label scheme, preprocessing, vote
//! aggregation and dataset views.

mod io;
mod preprocess;
mod votes;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, load_dataset_with, write_jsonl, Format, LabelPolicy, LoadOptions};
pub use preprocess::{preprocess_text, URL_TOKEN, USER_TOKEN};
pub use votes::{aggregate_votes, collapse_to_single_label, Aggregated, DEFAULT_VOTE_THRESHOLD};

pub const NUM_LABELS: usize = 11;

/// The eleven annotation categories in their canonical order. The order is
/// used for vector indexing and for every tie-break in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoralLabel {
    Authority,
    Betrayal,
    Care,
    Cheating,
    Degradation,
    Fairness,
    Harm,
    Loyalty,
    Purity,
    Subversion,
    NoMoral,
}

impl MoralLabel {
    pub const ALL: [MoralLabel; NUM_LABELS] = [
        MoralLabel::Authority,
        MoralLabel::Betrayal,
        MoralLabel::Care,
        MoralLabel::Cheating,
        MoralLabel::Degradation,
        MoralLabel::Fairness,
        MoralLabel::Harm,
        MoralLabel::Loyalty,
        MoralLabel::Purity,
        MoralLabel::Subversion,
        MoralLabel::NoMoral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MoralLabel::Authority => "authority",
            MoralLabel::Betrayal => "betrayal",
            MoralLabel::Care => "care",
            MoralLabel::Cheating => "cheating",
            MoralLabel::Degradation => "degradation",
            MoralLabel::Fairness => "fairness",
            MoralLabel::Harm => "harm",
            MoralLabel::Loyalty => "loyalty",
            MoralLabel::Purity => "purity",
            MoralLabel::Subversion => "subversion",
            MoralLabel::NoMoral => "no-moral",
        }
    }

    pub fn is_virtue(self) -> bool {
        LabelScheme::VIRTUES.contains(&self)
    }

    pub fn is_vice(self) -> bool {
        LabelScheme::VICES.contains(&self)
    }
}

impl fmt::Display for MoralLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MoralLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MoralLabel::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// The fixed moral-foundations label set: five virtues, their five vices and
/// `no-moral`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme;

impl LabelScheme {
    pub const VIRTUES: [MoralLabel; 5] = [
        MoralLabel::Authority,
        MoralLabel::Care,
        MoralLabel::Fairness,
        MoralLabel::Loyalty,
        MoralLabel::Purity,
    ];
    pub const VICES: [MoralLabel; 5] = [
        MoralLabel::Betrayal,
        MoralLabel::Cheating,
        MoralLabel::Degradation,
        MoralLabel::Harm,
        MoralLabel::Subversion,
    ];

    pub fn labels(&self) -> &'static [MoralLabel; NUM_LABELS] {
        &MoralLabel::ALL
    }

    pub fn len(&self) -> usize {
        NUM_LABELS
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub domain: String,
    pub tokens: Vec<String>,
    pub label: MoralLabel,
}

/// An immutable collection of documents ordered by `(domain, id)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    documents: Vec<Document>,
    domains: Vec<String>,
    scheme: LabelScheme,
}

impl Dataset {
    pub fn new(mut documents: Vec<Document>) -> Self {
        documents.sort_by(|a, b| (&a.domain, &a.id).cmp(&(&b.domain, &b.id)));
        let domains: BTreeSet<&str> = documents.iter().map(|d| d.domain.as_str()).collect();
        let domains = domains.into_iter().map(str::to_string).collect();
        Self {
            documents,
            domains,
            scheme: LabelScheme,
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn domains(&self) -> &[String] {
        &self.domains
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn has_domain(&self, domain: &str) -> bool {
        self.domains.iter().any(|d| d == domain)
    }

    pub fn domain_documents<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = &'a Document> + 'a {
        self.documents.iter().filter(move |d| d.domain == domain)
    }

    /// A new dataset holding only the documents that satisfy `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Document) -> bool) -> Dataset {
        Dataset::new(self.documents.iter().filter(|d| keep(d)).cloned().collect())
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    /// Per-label document counts for one domain.
    pub fn label_counts(&self, domain: &str) -> Result<[usize; NUM_LABELS]> {
        let mut counts = [0usize; NUM_LABELS];
        let mut any = false;
        for doc in self.domain_documents(domain) {
            counts[doc.label.index()] += 1;
            any = true;
        }
        if !any {
            return Err(Error::EmptyDomain(domain.to_string()));
        }
        Ok(counts)
    }

    /// Fraction of the domain's documents carrying each label.
    pub fn label_distribution(&self, domain: &str) -> Result<[f64; NUM_LABELS]> {
        let counts = self.label_counts(domain)?;
        let total: usize = counts.iter().sum();
        let mut out = [0.0; NUM_LABELS];
        for (o, c) in out.iter_mut().zip(counts) {
            *o = c as f64 / total as f64;
        }
        Ok(out)
    }

    /// Distribution over the ten moral labels only (no-moral removed and the
    /// rest renormalised). Errors when the domain has no moral document.
    pub fn moral_label_distribution(&self, domain: &str) -> Result<[f64; NUM_LABELS - 1]> {
        let counts = self.label_counts(domain)?;
        let total: usize = counts[..NUM_LABELS - 1].iter().sum();
        if total == 0 {
            return Err(Error::invalid(format!(
                "domain `{domain}` has no moral-labelled documents"
            )));
        }
        let mut out = [0.0; NUM_LABELS - 1];
        for (o, c) in out.iter_mut().zip(&counts[..NUM_LABELS - 1]) {
            *o = *c as f64 / total as f64;
        }
        Ok(out)
    }

    pub fn virtue_vice_ratio(&self, domain: &str) -> Result<f64> {
        let counts = self.label_counts(domain)?;
        let counts = counts.map(|c| c as f64);
        virtue_vice_ratio(&counts)
    }

    /// Document count and mean token count per domain, plus label percentages.
    pub fn summary(&self) -> Vec<DomainSummary> {
        let mut rows: Vec<DomainSummary> = self
            .domains
            .iter()
            .map(|d| summarize(d, self.domain_documents(d)))
            .collect();
        rows.push(summarize("Overall", self.documents.iter()));
        rows
    }
}

/// Virtue count divided by vice count; `no-moral` is ignored. Works on raw
/// counts or on percentages.
pub fn virtue_vice_ratio(counts: &[f64; NUM_LABELS]) -> Result<f64> {
    if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::invalid("label counts must be finite and non-negative"));
    }
    let virtue: f64 = LabelScheme::VIRTUES.iter().map(|l| counts[l.index()]).sum();
    let vice: f64 = LabelScheme::VICES.iter().map(|l| counts[l.index()]).sum();
    if vice == 0.0 {
        return Err(Error::invalid("virtue/vice ratio undefined: no vice-labelled documents"));
    }
    Ok(virtue / vice)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainSummary {
    pub domain: String,
    pub documents: usize,
    pub mean_tokens: f64,
    /// Label percentages in scheme order.
    pub label_percent: [f64; NUM_LABELS],
}

fn summarize<'a>(domain: &str, docs: impl Iterator<Item = &'a Document>) -> DomainSummary {
    let mut n = 0usize;
    let mut tokens = 0usize;
    let mut counts = [0usize; NUM_LABELS];
    for d in docs {
        n += 1;
        tokens += d.tokens.len();
        counts[d.label.index()] += 1;
    }
    let denom = n.max(1) as f64;
    DomainSummary {
        domain: domain.to_string(),
        documents: n,
        mean_tokens: tokens as f64 / denom,
        label_percent: counts.map(|c| 100.0 * c as f64 / denom),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, domain: &str, label: MoralLabel) -> Document {
        Document {
            id: id.into(),
            domain: domain.into(),
            tokens: vec!["a".into(), "b".into(), "c".into()],
            label,
        }
    }

    #[test]
    fn scheme_partition() {
        let virtues: BTreeSet<_> = LabelScheme::VIRTUES.into_iter().collect();
        let vices: BTreeSet<_> = LabelScheme::VICES.into_iter().collect();
        assert!(virtues.is_disjoint(&vices));
        let mut all = virtues.clone();
        all.extend(vices);
        all.insert(MoralLabel::NoMoral);
        assert_eq!(all.len(), NUM_LABELS);
        for (i, l) in MoralLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(l.name().parse::<MoralLabel>().unwrap(), *l);
        }
        assert!(matches!("Care".parse::<MoralLabel>(), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn dataset_orders_by_domain_then_id() {
        let ds = Dataset::new(vec![
            doc("2", "b", MoralLabel::Care),
            doc("1", "b", MoralLabel::Care),
            doc("9", "a", MoralLabel::Harm),
        ]);
        let keys: Vec<_> = ds.documents().iter().map(|d| (d.domain.as_str(), d.id.as_str())).collect();
        assert_eq!(keys, vec![("a", "9"), ("b", "1"), ("b", "2")]);
        assert_eq!(ds.domains(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn single_document_distribution_is_one_hot() {
        let ds = Dataset::new(vec![doc("1", "x", MoralLabel::Care)]);
        let dist = ds.label_distribution("x").unwrap();
        for (i, p) in dist.iter().enumerate() {
            let want = if i == MoralLabel::Care.index() { 1.0 } else { 0.0 };
            assert_eq!(*p, want);
        }
        assert!(matches!(ds.label_distribution("y"), Err(Error::EmptyDomain(_))));
    }

    #[test]
    fn balanced_virtue_vice_is_one() {
        let ds = Dataset::new(vec![
            doc("1", "x", MoralLabel::Care),
            doc("2", "x", MoralLabel::Harm),
            doc("3", "x", MoralLabel::NoMoral),
        ]);
        assert_eq!(ds.virtue_vice_ratio("x").unwrap(), 1.0);
    }

    #[test]
    fn zero_vice_is_an_error() {
        let ds = Dataset::new(vec![doc("1", "x", MoralLabel::Care)]);
        assert!(ds.virtue_vice_ratio("x").is_err());
    }

    #[test]
    fn moral_only_distribution_drops_no_moral() {
        let ds = Dataset::new(vec![
            doc("1", "x", MoralLabel::Care),
            doc("2", "x", MoralLabel::NoMoral),
            doc("3", "x", MoralLabel::NoMoral),
        ]);
        let d = ds.moral_label_distribution("x").unwrap();
        assert_eq!(d[MoralLabel::Care.index()], 1.0);
        assert_eq!(d.iter().sum::<f64>(), 1.0);
    }
}
