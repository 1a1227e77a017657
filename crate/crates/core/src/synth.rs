//! Synthetic multi-domain corpora with planted topic and label shift.
//!
//! The generator follows an LDA-style story with one twist: a document's
//! topic mixture is the domain mixture tilted by a per-label affinity, so the
//! words carry label signal. Because the mixture is a deterministic function
//! of (domain, label), tokens are i.i.d. given the label and the exact
//! posterior over labels is cheap to compute ([`bayes_oracle`]).

use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Document, MoralLabel, NUM_LABELS};
use crate::error::{Error, Result};
use crate::seed;

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub vocab_size: usize,
    /// Mixture over the shared topics, length K.
    pub topic_mixture: Vec<f64>,
    /// Prior over the 11 labels in scheme order.
    pub label_prior: Vec<f64>,
    /// Positive multiplicative tilt of the topic mixture per label, 11 × K.
    pub label_topic_affinity: Vec<Vec<f64>>,
    pub doc_length_range: (usize, usize),
    pub num_docs: usize,
}

impl DomainSpec {
    pub fn validate(&self, topics: &TopicSet) -> Result<()> {
        let k = topics.num_topics();
        let fail = |m: String| Err(Error::invalid(format!("domain `{}`: {m}", self.name)));
        if self.vocab_size != topics.vocab_size() {
            return fail(format!(
                "vocab_size {} does not match topic vocabulary {}",
                self.vocab_size,
                topics.vocab_size()
            ));
        }
        if self.topic_mixture.len() != k {
            return fail(format!("topic_mixture has {} entries, expected {k}", self.topic_mixture.len()));
        }
        check_probability(&self.topic_mixture).or_else(|m| fail(format!("topic_mixture {m}")))?;
        if self.label_prior.len() != NUM_LABELS {
            return fail(format!("label_prior has {} entries, expected {NUM_LABELS}", self.label_prior.len()));
        }
        check_probability(&self.label_prior).or_else(|m| fail(format!("label_prior {m}")))?;
        if self.label_topic_affinity.len() != NUM_LABELS
            || self.label_topic_affinity.iter().any(|row| row.len() != k)
        {
            return fail(format!("label_topic_affinity must be {NUM_LABELS} x {k}"));
        }
        if self
            .label_topic_affinity
            .iter()
            .flatten()
            .any(|a| !a.is_finite() || *a <= 0.0)
        {
            return fail("label_topic_affinity entries must be positive and finite".into());
        }
        let (lo, hi) = self.doc_length_range;
        if lo < 3 || hi < lo {
            return fail(format!("doc_length_range ({lo}, {hi}) must satisfy 3 <= min <= max"));
        }
        Ok(())
    }

    /// The document-level topic mixture for `label`: the domain mixture
    /// multiplied by the label affinity, renormalised.
    pub fn label_mixture(&self, label: MoralLabel) -> Vec<f64> {
        let aff = &self.label_topic_affinity[label.index()];
        let mut m: Vec<f64> = self.topic_mixture.iter().zip(aff).map(|(p, a)| p * a).collect();
        let z: f64 = m.iter().sum();
        m.iter_mut().for_each(|x| *x /= z);
        m
    }
}

fn check_probability(p: &[f64]) -> std::result::Result<(), String> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err("has negative or non-finite entries".into());
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(format!("sums to {s}, not 1"));
    }
    Ok(())
}

/// Shared topic-word distributions and the vocabulary they index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSet {
    pub vocabulary: Vec<String>,
    /// K rows, each a distribution over the vocabulary.
    pub topics: Vec<Vec<f64>>,
}

impl TopicSet {
    pub fn new(vocabulary: Vec<String>, topics: Vec<Vec<f64>>) -> Result<Self> {
        if topics.is_empty() {
            return Err(Error::invalid("at least one topic is required"));
        }
        for (k, t) in topics.iter().enumerate() {
            if t.len() != vocabulary.len() {
                return Err(Error::invalid(format!("topic {k} has wrong vocabulary length")));
            }
            check_probability(t).map_err(|m| Error::invalid(format!("topic {k} {m}")))?;
        }
        Ok(Self { vocabulary, topics })
    }

    /// K topics over `vocab_size` words. Topic k puts `anchor_mass` of its
    /// probability on its own contiguous block of words and spreads the rest
    /// over the whole vocabulary; within-block weights are Gamma draws.
    pub fn planted(num_topics: usize, vocab_size: usize, anchor_mass: f64, seed: u64) -> Result<Self> {
        if num_topics < 1 || vocab_size < num_topics {
            return Err(Error::invalid("need 1 <= num_topics <= vocab_size"));
        }
        if !(0.0..=1.0).contains(&anchor_mass) {
            return Err(Error::invalid("anchor_mass must lie in [0, 1]"));
        }
        let mut rng = seed::rng(seed, "synth/topics");
        let gamma = Gamma::new(2.0, 1.0).expect("valid gamma");
        let vocabulary: Vec<String> = (0..vocab_size).map(word_name).collect();
        let block = vocab_size / num_topics;
        let mut topics = Vec::with_capacity(num_topics);
        for k in 0..num_topics {
            let start = k * block;
            let end = if k + 1 == num_topics { vocab_size } else { start + block };
            let weights: Vec<f64> = (start..end).map(|_| gamma.sample(&mut rng)).collect();
            let wsum: f64 = weights.iter().sum();
            let mut t = vec![(1.0 - anchor_mass) / vocab_size as f64; vocab_size];
            for (w, x) in (start..end).zip(&weights) {
                t[w] += anchor_mass * x / wsum;
            }
            let z: f64 = t.iter().sum();
            t.iter_mut().for_each(|x| *x /= z);
            topics.push(t);
        }
        Ok(Self { vocabulary, topics })
    }

    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// P(word | label, domain), marginalising the topic.
    pub fn word_distribution(&self, spec: &DomainSpec, label: MoralLabel) -> Vec<f64> {
        let mix = spec.label_mixture(label);
        let mut p = vec![0.0; self.vocab_size()];
        for (m, topic) in mix.iter().zip(&self.topics) {
            for (pw, tw) in p.iter_mut().zip(topic) {
                *pw += m * tw;
            }
        }
        p
    }
}

pub fn word_name(i: usize) -> String {
    format!("w{i:04}")
}

/// Two interpolation knobs in `[0, 1]`: 0 means identical generators across
/// groups, 1 means disjoint topic supports (and label-specific word use) and
/// disjoint label supports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftKnob {
    pub topic_shift: f64,
    pub label_shift: f64,
}

impl ShiftKnob {
    pub fn new(topic_shift: f64, label_shift: f64) -> Result<Self> {
        let k = Self {
            topic_shift,
            label_shift,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("topic_shift", self.topic_shift), ("label_shift", self.label_shift)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A declarative recipe that expands into domain specs and shared topics.
///
/// Domains are assigned to generator groups; domains in the same group share
/// an identical generator and shift is applied between groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub domain_names: Vec<String>,
    /// Group id per domain.
    pub groups: Vec<usize>,
    pub docs_per_domain: usize,
    pub vocab_size: usize,
    pub num_topics: usize,
    pub doc_length_range: (usize, usize),
    pub knobs: ShiftKnob,
    /// Scale of the log-affinity between labels and topics; larger values make
    /// labels easier to read off the words.
    pub affinity_strength: f64,
    /// Share of each planted topic's mass on its anchor block.
    pub anchor_mass: f64,
    /// Weight of the group-specific part of the label-topic affinity, i.e.
    /// how differently the same topics map to labels across groups. `None`
    /// ties it to the topic-shift knob.
    pub concept_shift: Option<f64>,
    /// Share of every document drawn from a label-neutral marker topic owned
    /// by its group, like an event hashtag. Markers make groups easy to tell
    /// apart without saying anything about the label. At 0 no marker topics
    /// are planted.
    pub marker_share: f64,
    /// Label prior before label shift is applied.
    pub base_label_prior: Vec<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            domain_names: (0..5).map(|i| format!("dom{i}")).collect(),
            groups: vec![0, 1, 2, 3, 4],
            docs_per_domain: 2000,
            vocab_size: 2000,
            num_topics: 20,
            doc_length_range: (8, 25),
            knobs: ShiftKnob {
                topic_shift: 0.0,
                label_shift: 0.0,
            },
            affinity_strength: 2.0,
            anchor_mass: 0.9,
            concept_shift: None,
            marker_share: 0.0,
            base_label_prior: vec![1.0 / NUM_LABELS as f64; NUM_LABELS],
        }
    }
}

/// A generated setup: the expanded specs and the topics they share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSetup {
    pub specs: Vec<DomainSpec>,
    pub topics: TopicSet,
}

impl Scenario {
    /// Five domains, shift knobs at zero.
    pub fn no_shift() -> Self {
        Self::default()
    }

    /// Five domains in two generator groups, `{dom0, dom1}` and
    /// `{dom2, dom3, dom4}`. Holding out `dom0` leaves one matching source
    /// and three that disagree with it: different label prior, topics that
    /// map to other labels, and group marker words that make the mismatch
    /// visible.
    pub fn strong_shift() -> Self {
        Self {
            groups: vec![0, 0, 1, 1, 1],
            vocab_size: 500,
            affinity_strength: 3.0,
            knobs: ShiftKnob {
                topic_shift: 0.3,
                label_shift: 0.8,
            },
            concept_shift: Some(1.0),
            marker_share: 0.3,
            ..Self::default()
        }
    }

    /// The same scenario with every source of shift switched off.
    pub fn without_shift(self) -> Self {
        Self {
            knobs: ShiftKnob { topic_shift: 0.0, label_shift: 0.0 },
            concept_shift: Some(0.0),
            marker_share: 0.0,
            ..self
        }
    }

    /// Every domain in its own group.
    pub fn per_domain_shift(knobs: ShiftKnob) -> Self {
        Self {
            knobs,
            ..Self::default()
        }
    }

    pub fn with_docs_per_domain(mut self, n: usize) -> Self {
        self.docs_per_domain = n;
        self
    }

    pub fn num_groups(&self) -> usize {
        self.groups.iter().copied().max().map_or(0, |g| g + 1)
    }

    pub fn group_of(&self, domain: &str) -> Option<usize> {
        self.domain_names
            .iter()
            .position(|d| d == domain)
            .map(|i| self.groups[i])
    }

    pub fn validate(&self) -> Result<()> {
        if self.domain_names.is_empty() {
            return Err(Error::invalid("scenario needs at least one domain"));
        }
        if self.groups.len() != self.domain_names.len() {
            return Err(Error::invalid("groups must have one entry per domain"));
        }
        let g = self.num_groups();
        if (0..g).any(|i| !self.groups.contains(&i)) {
            return Err(Error::invalid("group ids must be contiguous from 0"));
        }
        if self.num_topics < g {
            return Err(Error::invalid("need at least one topic per group"));
        }
        if self.base_label_prior.len() != NUM_LABELS {
            return Err(Error::invalid("base_label_prior must have 11 entries"));
        }
        check_probability(&self.base_label_prior).map_err(|m| Error::invalid(format!("base_label_prior {m}")))?;
        if !(0.0..1.0).contains(&self.marker_share) {
            return Err(Error::invalid("marker_share must lie in [0, 1)"));
        }
        if let Some(cs) = self.concept_shift {
            if !(0.0..=1.0).contains(&cs) {
                return Err(Error::invalid("concept_shift must lie in [0, 1]"));
            }
        }
        self.knobs.validate()
    }

    pub fn build(&self, seed: u64) -> Result<SynthSetup> {
        self.validate()?;
        let k = self.num_topics;
        let groups = self.num_groups();
        let markers = if self.marker_share > 0.0 { groups } else { 0 };
        // marker topics come last, one per group
        let topics = TopicSet::planted(k + markers, self.vocab_size, self.anchor_mass, seed)?;
        let m = self.marker_share;

        let mut rng = seed::rng(seed, "synth/affinity");
        let normal_matrix = |rng: &mut seed::Rng| -> Vec<Vec<f64>> {
            (0..NUM_LABELS)
                .map(|_| (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect()
        };
        let shared = normal_matrix(&mut rng);
        let per_group: Vec<_> = (0..groups).map(|_| normal_matrix(&mut rng)).collect();

        let uniform_topics = vec![1.0 / k as f64; k];
        let ts = self.knobs.topic_shift;
        let ls = self.knobs.label_shift;
        let cs = self.concept_shift.unwrap_or(ts);

        let specs = self
            .domain_names
            .iter()
            .zip(&self.groups)
            .map(|(name, &g)| {
                // topics split into contiguous blocks, one per group
                let lo = g * k / groups;
                let hi = (g + 1) * k / groups;
                let mut block = vec![0.0; k];
                for b in &mut block[lo..hi] {
                    *b = 1.0 / (hi - lo) as f64;
                }
                let topic_mixture = mix(&uniform_topics, &block, ts);

                // labels split round-robin, one residue class per group
                let members: Vec<usize> = (0..NUM_LABELS).filter(|l| l % groups == g).collect();
                let mut concentrated = vec![0.0; NUM_LABELS];
                for &l in &members {
                    concentrated[l] = 1.0 / members.len() as f64;
                }
                let label_prior = mix(&self.base_label_prior, &concentrated, ls);

                let label_topic_affinity = shared
                    .iter()
                    .zip(&per_group[g])
                    .map(|(s_row, g_row)| {
                        let mut row: Vec<f64> = s_row
                            .iter()
                            .zip(g_row)
                            .map(|(s, gr)| (self.affinity_strength * ((1.0 - cs) * s + cs * gr)).exp())
                            .collect();
                        // The label's mean affinity keeps the marker share at
                        // exactly `m` whatever the label.
                        let mean: f64 = row.iter().zip(&topic_mixture).map(|(a, p)| a * p).sum();
                        row.extend(std::iter::repeat_n(mean, markers));
                        row
                    })
                    .collect();
                let mut topic_mixture: Vec<f64> = topic_mixture.iter().map(|p| (1.0 - m) * p).collect();
                topic_mixture.extend((0..markers).map(|h| if h == g { m } else { 0.0 }));

                DomainSpec {
                    name: name.clone(),
                    vocab_size: self.vocab_size,
                    topic_mixture,
                    label_prior,
                    label_topic_affinity,
                    doc_length_range: self.doc_length_range,
                    num_docs: self.docs_per_domain,
                }
            })
            .collect();
        Ok(SynthSetup { specs, topics })
    }
}

fn mix(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    v
}

struct Cumulative(Vec<f64>);

impl Cumulative {
    fn new(p: &[f64]) -> Self {
        let mut acc = 0.0;
        Self(
            p.iter()
                .map(|x| {
                    acc += x;
                    acc
                })
                .collect(),
        )
    }

    fn sample(&self, rng: &mut seed::Rng) -> usize {
        let total = *self.0.last().expect("non-empty");
        let u: f64 = rng.random::<f64>() * total;
        self.0.partition_point(|&c| c <= u).min(self.0.len() - 1)
    }
}

/// Generate one dataset from the specs. Each domain draws from its own
/// seeded stream, so the result depends only on `(specs, topics, seed)`.
pub fn generate(specs: &[DomainSpec], topics: &TopicSet, seed: u64) -> Result<Dataset> {
    if specs.is_empty() {
        return Err(Error::invalid("at least one domain spec is required"));
    }
    for s in specs {
        s.validate(topics)?;
    }
    let topic_tables: Vec<Cumulative> = topics.topics.iter().map(|t| Cumulative::new(t)).collect();
    let mut docs = Vec::new();
    for spec in specs {
        let mut rng = seed::rng(seed, &format!("synth/domain/{}", spec.name));
        let label_table = Cumulative::new(&spec.label_prior);
        let mixtures: Vec<Cumulative> = MoralLabel::ALL
            .iter()
            .map(|l| Cumulative::new(&spec.label_mixture(*l)))
            .collect();
        let (lo, hi) = spec.doc_length_range;
        for i in 0..spec.num_docs {
            let label = MoralLabel::ALL[label_table.sample(&mut rng)];
            let len = rng.random_range(lo..=hi);
            let tokens = (0..len)
                .map(|_| {
                    let z = mixtures[label.index()].sample(&mut rng);
                    topics.vocabulary[topic_tables[z].sample(&mut rng)].clone()
                })
                .collect();
            docs.push(Document {
                id: format!("{}-{i:05}", spec.name),
                domain: spec.name.clone(),
                tokens,
                label,
            });
        }
    }
    Ok(Dataset::new(docs))
}

/// Exact posterior over labels for a generated document under its domain's
/// generator. Errors when the domain or a token is unknown to the setup.
pub fn bayes_oracle(document: &Document, specs: &[DomainSpec], topics: &TopicSet) -> Result<[f64; NUM_LABELS]> {
    BayesOracle::new(specs, topics).posterior(document)
}

/// Precomputed word likelihoods for repeated posterior queries.
pub struct BayesOracle<'a> {
    specs: &'a [DomainSpec],
    word_index: HashMap<&'a str, usize>,
    log_word: Vec<Vec<Vec<f64>>>,
}

impl<'a> BayesOracle<'a> {
    pub fn new(specs: &'a [DomainSpec], topics: &'a TopicSet) -> Self {
        let word_index = topics
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i))
            .collect();
        let log_word = specs
            .iter()
            .map(|s| {
                MoralLabel::ALL
                    .iter()
                    .map(|l| topics.word_distribution(s, *l).into_iter().map(f64::ln).collect())
                    .collect()
            })
            .collect();
        Self {
            specs,
            word_index,
            log_word,
        }
    }

    pub fn posterior(&self, document: &Document) -> Result<[f64; NUM_LABELS]> {
        let d = self
            .specs
            .iter()
            .position(|s| s.name == document.domain)
            .ok_or_else(|| Error::EmptyDomain(document.domain.clone()))?;
        let spec = &self.specs[d];
        let ids: Vec<usize> = document
            .tokens
            .iter()
            .map(|t| {
                self.word_index
                    .get(t.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("token `{t}` is not in the synthetic vocabulary")))
            })
            .collect::<Result<_>>()?;
        let mut logp = [f64::NEG_INFINITY; NUM_LABELS];
        for (l, lp) in logp.iter_mut().enumerate() {
            if spec.label_prior[l] > 0.0 {
                *lp = spec.label_prior[l].ln() + ids.iter().map(|&w| self.log_word[d][l][w]).sum::<f64>();
            }
        }
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut post = logp.map(|x| (x - max).exp());
        let z: f64 = post.iter().sum();
        post.iter_mut().for_each(|p| *p /= z);
        Ok(post)
    }

    /// Most probable label; ties go to the earliest label.
    pub fn predict(&self, document: &Document) -> Result<MoralLabel> {
        let post = self.posterior(document)?;
        let mut best = 0;
        for (i, p) in post.iter().enumerate() {
            if *p > post[best] {
                best = i;
            }
        }
        Ok(MoralLabel::ALL[best])
    }
}
