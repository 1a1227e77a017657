use serde::{Deserialize, Serialize};

use crate::corpus::{MoralLabel, NUM_LABELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Macro,
    Micro,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct F1Scores {
    #[serde(rename = "macro")]
    pub macro_f1: f64,
    #[serde(rename = "micro")]
    pub micro_f1: f64,
    #[serde(rename = "weighted")]
    pub weighted_f1: f64,
}

impl F1Scores {
    pub fn get(&self, avg: Averaging) -> f64 {
        match avg {
            Averaging::Macro => self.macro_f1,
            Averaging::Micro => self.micro_f1,
            Averaging::Weighted => self.weighted_f1,
        }
    }
}

/// Per-class F1 is `2PR / (P + R)`, 0 when `P + R = 0`. Macro and weighted
/// averages run over the labels that occur in `gold` or `pred`.
pub fn f1_scores(gold: &[MoralLabel], pred: &[MoralLabel]) -> F1Scores {
    assert_eq!(gold.len(), pred.len(), "gold and predictions differ in length");
    if gold.is_empty() {
        return F1Scores::default();
    }
    let mut tp = [0usize; NUM_LABELS];
    let mut gold_n = [0usize; NUM_LABELS];
    let mut pred_n = [0usize; NUM_LABELS];
    for (g, p) in gold.iter().zip(pred) {
        gold_n[g.index()] += 1;
        pred_n[p.index()] += 1;
        if g == p {
            tp[g.index()] += 1;
        }
    }
    let mut macro_sum = 0.0;
    let mut weighted_sum = 0.0;
    let mut labels = 0usize;
    for c in 0..NUM_LABELS {
        if gold_n[c] == 0 && pred_n[c] == 0 {
            continue;
        }
        labels += 1;
        let p = if pred_n[c] > 0 { tp[c] as f64 / pred_n[c] as f64 } else { 0.0 };
        let r = if gold_n[c] > 0 { tp[c] as f64 / gold_n[c] as f64 } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        macro_sum += f;
        weighted_sum += f * gold_n[c] as f64;
    }
    let n = gold.len() as f64;
    let correct: usize = tp.iter().sum();
    F1Scores {
        macro_f1: macro_sum / labels as f64,
        // single-label micro F1 is accuracy
        micro_f1: correct as f64 / n,
        weighted_f1: weighted_sum / n,
    }
}

pub fn f1_score(gold: &[MoralLabel], pred: &[MoralLabel], averaging: Averaging) -> f64 {
    f1_scores(gold, pred).get(averaging)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use MoralLabel::{Care as A, Harm as B};

    #[test]
    fn perfect_prediction() {
        let g = [A, B, A, MoralLabel::NoMoral];
        let s = f1_scores(&g, &g);
        assert_eq!((s.macro_f1, s.micro_f1, s.weighted_f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_computed_macro() {
        // class A: P = 1, R = 1/2 -> 2/3; class B: P = 1/2, R = 1 -> 2/3
        let f = f1_score(&[A, A, B], &[A, B, B], Averaging::Macro);
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_prediction_on_balanced_gold() {
        // class A: P = 1/2, R = 1 -> 2/3; class B: 0
        let f = f1_score(&[A, B, A, B], &[A, A, A, A], Averaging::Macro);
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
        let w = f1_score(&[A, B, A, B], &[A, A, A, A], Averaging::Weighted);
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn micro_equals_accuracy(pairs in proptest::collection::vec((0usize..11, 0usize..11), 1..60)) {
            let g: Vec<_> = pairs.iter().map(|p| MoralLabel::ALL[p.0]).collect();
            let p: Vec<_> = pairs.iter().map(|p| MoralLabel::ALL[p.1]).collect();
            let acc = g.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / g.len() as f64;
            let s = f1_scores(&g, &p);
            prop_assert!((s.micro_f1 - acc).abs() < 1e-15);
            for v in [s.macro_f1, s.micro_f1, s.weighted_f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
