//! Leave-one-domain-out experiments comparing the In-Domain, No-adapt and
//! Adapt approaches on a held-out target domain.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{f1_scores, F1Scores};
use crate::corpus::{Dataset, Document, MoralLabel, NUM_LABELS};
use crate::error::{Error, Result};
use crate::l2af::{self, EncoderConfig, L2afHyperparams, L2afModel, TrainReport};
use crate::seed;

/// Smallest target domain the protocol accepts.
pub const MIN_TARGET_DOCS: usize = 25;
pub const VALIDATION_FRACTION: f64 = 0.2;
/// Wall-clock budget for one experiment; longer runs are flagged.
pub const RUNTIME_BUDGET_SECS: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    /// Trained on the target's validation split, no source data.
    InDomain,
    /// Trained on the sources without instance weighting.
    NoAdapt,
    /// Instance-weighted adaptation.
    Adapt,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::InDomain, Approach::NoAdapt, Approach::Adapt];

    pub fn name(self) -> &'static str {
        match self {
            Approach::InDomain => "In-Domain",
            Approach::NoAdapt => "No-adapt",
            Approach::Adapt => "Adapt",
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "in-domain" => Ok(Approach::InDomain),
            "no-adapt" => Ok(Approach::NoAdapt),
            "adapt" => Ok(Approach::Adapt),
            other => Err(Error::Config(format!("unknown approach `{other}` (expected in-domain, no-adapt or adapt)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LodoSplit {
    pub source_train: Dataset,
    pub target_validation: Dataset,
    pub target_test: Dataset,
}

/// Every non-target document trains; the target is split 80/20 into test
/// and validation, stratified by label.
///
/// Each label contributes `floor(0.2 n)` validation documents; the remaining
/// validation slots (up to `round(0.2 N)` overall) go to the labels with the
/// largest fractional parts, ties to the lower label index.
pub fn lodo_split(dataset: &Dataset, target: &str, seed: u64) -> Result<LodoSplit> {
    if !dataset.has_domain(target) {
        return Err(Error::EmptyDomain(target.to_string()));
    }
    let target_docs: Vec<&Document> = dataset.documents().iter().filter(|d| d.domain == target).collect();
    if target_docs.len() < MIN_TARGET_DOCS {
        return Err(Error::invalid(format!(
            "target domain `{target}` has {} documents; at least {MIN_TARGET_DOCS} are required",
            target_docs.len()
        )));
    }
    let mut by_label: Vec<Vec<&Document>> = vec![Vec::new(); NUM_LABELS];
    for d in &target_docs {
        by_label[d.label.index()].push(d);
    }
    let total_val = (VALIDATION_FRACTION * target_docs.len() as f64).round() as usize;
    let mut quota: Vec<usize> = by_label.iter().map(|g| (VALIDATION_FRACTION * g.len() as f64).floor() as usize).collect();
    let mut order: Vec<usize> = (0..NUM_LABELS).collect();
    let frac = |c: usize| VALIDATION_FRACTION * by_label[c].len() as f64 - quota[c] as f64;
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    let mut missing = total_val.saturating_sub(quota.iter().sum());
    for &c in order.iter().cycle().take(NUM_LABELS * 2) {
        if missing == 0 {
            break;
        }
        if quota[c] < by_label[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }

    let mut rng = seed::rng(seed, &format!("lodo/{target}"));
    let (mut val, mut test) = (Vec::new(), Vec::new());
    for (c, group) in by_label.iter_mut().enumerate() {
        group.shuffle(&mut rng);
        val.extend(group[..quota[c]].iter().map(|d| (*d).clone()));
        test.extend(group[quota[c]..].iter().map(|d| (*d).clone()));
    }
    let source = dataset.documents().iter().filter(|d| d.domain != target).cloned().collect::<Vec<_>>();
    if source.is_empty() {
        return Err(Error::invalid("no source domains besides the target"));
    }
    Ok(LodoSplit {
        source_train: Dataset::new(source),
        target_validation: Dataset::new(val),
        target_test: Dataset::new(test),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub target_domain: String,
    pub approaches: Vec<Approach>,
    pub encoder: EncoderConfig,
    pub hyper: L2afHyperparams,
    pub split_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            target_domain: String::new(),
            approaches: Approach::ALL.to_vec(),
            encoder: EncoderConfig::default(),
            hyper: L2afHyperparams::default(),
            split_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Hex SHA-256 of the config's canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// No-adapt against Adapt on the synthetic strong-shift benchmark, with
    /// the step sizes that corpus needs to train in 30 epochs.
    pub fn synthetic_benchmark(target_domain: &str, seed: u64) -> Self {
        Self {
            target_domain: target_domain.to_string(),
            approaches: vec![Approach::NoAdapt, Approach::Adapt],
            hyper: L2afHyperparams {
                lr_prediction: 1e-3,
                lr_weighting: 1e-3,
                weighting_trains_encoder: false,
                seed,
                ..L2afHyperparams::default()
            },
            split_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_domain.is_empty() {
            return Err(Error::Config("target_domain is required".into()));
        }
        if self.approaches.is_empty() {
            return Err(Error::Config("at least one approach is required".into()));
        }
        self.hyper.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachResult {
    pub approach: Approach,
    pub f1: F1Scores,
    pub duration_secs: f64,
    pub best_epoch: Option<usize>,
    pub best_validation_macro_f1: Option<f64>,
    /// Mean in-domain probability per source domain (Adapt only).
    pub mean_weight_by_domain: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    /// Mean over baselines of `100 (adapt - b) / b`.
    pub mean_relative: f64,
    /// `100 (adapt - mean(b)) / mean(b)`.
    pub pooled: f64,
    pub per_baseline: BTreeMap<Approach, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub target_domain: String,
    pub seed: u64,
    pub split_seed: u64,
    pub config_hash: String,
    pub sizes: SplitSizes,
    pub results: Vec<ApproachResult>,
    /// Macro-F1 improvement of Adapt over the baselines that were run.
    pub improvement: Option<Improvement>,
    pub duration_secs: f64,
    pub over_budget: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub source_train: usize,
    pub target_validation: usize,
    pub target_test: usize,
}

impl ExperimentReport {
    pub fn result(&self, approach: Approach) -> Option<&ApproachResult> {
        self.results.iter().find(|r| r.approach == approach)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per approach, one column per F1 average.
    pub fn to_markdown(&self) -> String {
        let mut s = format!("Target: {} (seed {})\n\n", self.target_domain, self.seed);
        s.push_str("| Approach | Macro-F1 | Micro-F1 | Weighted-F1 |\n|---|---|---|---|\n");
        for r in &self.results {
            let _ = writeln!(
                s,
                "| {} | {:.3} | {:.3} | {:.3} |",
                r.approach.name(),
                r.f1.macro_f1,
                r.f1.micro_f1,
                r.f1.weighted_f1
            );
        }
        if let Some(imp) = &self.improvement {
            let _ = writeln!(s, "| Δ↑ (%) | {:.3} | | |", imp.pooled);
        }
        s
    }
}

/// Mean over baselines of the relative improvement `100 (adapt - b) / b`.
pub fn improvement_delta(adapt_f1: f64, baseline_f1s: &[f64]) -> Result<f64> {
    if baseline_f1s.is_empty() {
        return Err(Error::invalid("no baselines to compare against"));
    }
    let mut sum = 0.0;
    for &b in baseline_f1s {
        if b == 0.0 {
            return Err(Error::invalid("baseline F1 of 0 makes the relative improvement undefined"));
        }
        sum += 100.0 * (adapt_f1 - b) / b;
    }
    Ok(sum / baseline_f1s.len() as f64)
}

/// Relative improvement of the mean Adapt score over the mean baseline
/// score, pooling several encoders: `100 (mean(a) - mean(b)) / mean(b)`.
pub fn pooled_improvement(adapt_f1s: &[f64], baseline_f1s: &[f64]) -> Result<f64> {
    if adapt_f1s.is_empty() || baseline_f1s.is_empty() {
        return Err(Error::invalid("no scores to compare"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let b = mean(baseline_f1s);
    if b == 0.0 {
        return Err(Error::invalid("baseline F1 of 0 makes the relative improvement undefined"));
    }
    Ok(100.0 * (mean(adapt_f1s) - b) / b)
}

fn score(model: &L2afModel, test: &Dataset) -> Result<F1Scores> {
    let docs: Vec<&Document> = test.documents().iter().collect();
    let gold: Vec<MoralLabel> = docs.iter().map(|d| d.label).collect();
    let pred = model.infer_documents(&docs)?;
    Ok(f1_scores(&gold, &pred))
}

/// Runs the configured approaches on one leave-one-domain-out split.
pub fn run_experiment(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(dataset, config, |_, _, _| Ok(()))
}

/// Like [`run_experiment`], handing each trained model and its training log
/// to `on_trained` before it is dropped.
pub fn run_experiment_with(
    dataset: &Dataset,
    config: &ExperimentConfig,
    mut on_trained: impl FnMut(Approach, &L2afModel, &TrainReport) -> Result<()>,
) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let split = lodo_split(dataset, &config.target_domain, config.split_seed)?;
    let mut results = Vec::new();
    let mut approaches = config.approaches.clone();
    approaches.sort();
    approaches.dedup();
    for approach in approaches {
        let t0 = Instant::now();
        let (model, report) = match approach {
            Approach::InDomain => l2af::train_in_domain(&split.target_validation, &config.encoder, &config.hyper)?,
            Approach::NoAdapt => {
                l2af::train_no_adapt(&split.source_train, &split.target_validation, &config.encoder, &config.hyper)?
            }
            Approach::Adapt => l2af::train(&split.source_train, &split.target_validation, &config.encoder, &config.hyper)?,
        };
        on_trained(approach, &model, &report)?;
        let mean_weight_by_domain = match approach {
            Approach::Adapt => Some(l2af::mean_weight_by_domain(&model, &split.source_train)?.into_iter().collect()),
            _ => None,
        };
        results.push(ApproachResult {
            approach,
            f1: score(&model, &split.target_test)?,
            duration_secs: t0.elapsed().as_secs_f64(),
            best_epoch: report.best_epoch,
            best_validation_macro_f1: report.best_validation_macro_f1,
            mean_weight_by_domain,
        });
    }
    let improvement = improvement_of(&results)?;
    let duration_secs = started.elapsed().as_secs_f64();
    Ok(ExperimentReport {
        target_domain: config.target_domain.clone(),
        seed: config.hyper.seed,
        split_seed: config.split_seed,
        config_hash: config.hash(),
        sizes: SplitSizes {
            source_train: split.source_train.len(),
            target_validation: split.target_validation.len(),
            target_test: split.target_test.len(),
        },
        results,
        improvement,
        duration_secs,
        over_budget: duration_secs > RUNTIME_BUDGET_SECS,
    })
}

fn improvement_of(results: &[ApproachResult]) -> Result<Option<Improvement>> {
    let Some(adapt) = results.iter().find(|r| r.approach == Approach::Adapt) else {
        return Ok(None);
    };
    let baselines: Vec<&ApproachResult> = results.iter().filter(|r| r.approach != Approach::Adapt).collect();
    if baselines.is_empty() || baselines.iter().any(|b| b.f1.macro_f1 == 0.0) {
        return Ok(None);
    }
    let scores: Vec<f64> = baselines.iter().map(|b| b.f1.macro_f1).collect();
    let a = adapt.f1.macro_f1;
    Ok(Some(Improvement {
        mean_relative: improvement_delta(a, &scores)?,
        pooled: pooled_improvement(&[a], &scores)?,
        per_baseline: baselines
            .iter()
            .map(|b| Ok((b.approach, improvement_delta(a, &[b.f1.macro_f1])?)))
            .collect::<Result<_>>()?,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(target_labels: &[(MoralLabel, usize)]) -> Dataset {
        let mut docs = Vec::new();
        let mut i = 0;
        for &(label, n) in target_labels {
            for _ in 0..n {
                docs.push(Document { id: format!("t{i:03}"), domain: "tgt".into(), tokens: vec!["a".into()], label });
                i += 1;
            }
        }
        for j in 0..10 {
            docs.push(Document {
                id: format!("s{j}"),
                domain: "src".into(),
                tokens: vec!["b".into()],
                label: MoralLabel::Care,
            });
        }
        Dataset::new(docs)
    }

    #[test]
    fn split_ratio_and_stratification() {
        let ds = corpus(&[(MoralLabel::Care, 5), (MoralLabel::Harm, 45), (MoralLabel::NoMoral, 50)]);
        let split = lodo_split(&ds, "tgt", 7).unwrap();
        assert_eq!(split.target_test.len(), 80);
        assert_eq!(split.target_validation.len(), 20);
        assert_eq!(split.source_train.len(), 10);
        assert_eq!(split.target_validation.label_counts("tgt").unwrap()[MoralLabel::Care.index()], 1);
        assert_eq!(split.target_test.label_counts("tgt").unwrap()[MoralLabel::Care.index()], 4);
        let again = lodo_split(&ds, "tgt", 7).unwrap();
        assert_eq!(again.target_validation.documents(), split.target_validation.documents());
        let ids = |d: &Dataset| d.documents().iter().map(|x| x.id.clone()).collect::<std::collections::BTreeSet<_>>();
        assert!(ids(&split.target_test).is_disjoint(&ids(&split.target_validation)));
    }

    #[test]
    fn split_rounds_total_with_uneven_classes() {
        let ds = corpus(&[(MoralLabel::Care, 7), (MoralLabel::Harm, 9), (MoralLabel::Loyalty, 11)]);
        let split = lodo_split(&ds, "tgt", 1).unwrap();
        assert_eq!(split.target_validation.len(), 5);
        assert_eq!(split.target_test.len(), 22);
    }

    #[test]
    fn split_errors() {
        let ds = corpus(&[(MoralLabel::Care, 24)]);
        assert!(lodo_split(&ds, "tgt", 0).is_err());
        assert!(matches!(lodo_split(&ds, "missing", 0), Err(Error::EmptyDomain(_))));
    }

    #[test]
    fn delta_formulas() {
        assert!((improvement_delta(0.55, &[0.50]).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(improvement_delta(0.6, &[0.6]).unwrap(), 0.0);
        assert!(improvement_delta(0.6, &[0.0]).is_err());
        assert!(improvement_delta(0.6, &[]).is_err());
        // Election column: RNN and BERT Adapt against all four baselines.
        let pooled = pooled_improvement(&[0.712, 0.758], &[0.551, 0.653, 0.683, 0.735]).unwrap();
        assert!((pooled - 12.128).abs() < 5e-4, "{pooled}");
    }

    #[test]
    fn approach_names_parse() {
        assert_eq!("no_adapt".parse::<Approach>().unwrap(), Approach::NoAdapt);
        assert_eq!("In-Domain".parse::<Approach>().unwrap(), Approach::InDomain);
        assert!("other".parse::<Approach>().is_err());
    }
}
