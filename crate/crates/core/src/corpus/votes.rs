use std::collections::BTreeMap;

use crate::corpus::MoralLabel;
use crate::error::{Error, Result};

pub const DEFAULT_VOTE_THRESHOLD: i64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Aggregated {
    /// Labels kept after the majority rule, in scheme order.
    Keep(Vec<MoralLabel>),
    /// No label reached the threshold; the document is dropped.
    Reject,
}

/// Majority-vote aggregation. Labels with at least `threshold` votes are
/// kept; when `no-moral` is among the labels with the strictly greatest
/// count the result is exactly `{no-moral}`.
pub fn aggregate_votes(votes: &BTreeMap<MoralLabel, i64>, threshold: i64) -> Result<Aggregated> {
    if votes.is_empty() {
        return Err(Error::invalid("vote map is empty"));
    }
    if let Some((label, count)) = votes.iter().find(|(_, c)| **c < 0) {
        return Err(Error::invalid(format!("negative vote count {count} for `{label}`")));
    }
    let kept: Vec<MoralLabel> = votes
        .iter()
        .filter(|(_, c)| **c >= threshold)
        .map(|(l, _)| *l)
        .collect();
    if kept.is_empty() {
        return Ok(Aggregated::Reject);
    }
    let max = votes.values().copied().max().unwrap_or(0);
    if votes.get(&MoralLabel::NoMoral) == Some(&max) {
        return Ok(Aggregated::Keep(vec![MoralLabel::NoMoral]));
    }
    Ok(Aggregated::Keep(kept))
}

/// Pick the kept label with the most votes; ties go to the earliest label in
/// scheme order.
pub fn collapse_to_single_label(
    kept: &[MoralLabel],
    votes: &BTreeMap<MoralLabel, i64>,
) -> Result<MoralLabel> {
    let mut best: Option<(MoralLabel, i64)> = None;
    for &label in kept {
        let count = votes.get(&label).copied().unwrap_or(0);
        best = match best {
            Some((b, bc)) if bc > count || (bc == count && b < label) => Some((b, bc)),
            _ => Some((label, count)),
        };
    }
    best.map(|(l, _)| l)
        .ok_or_else(|| Error::invalid("cannot collapse an empty label set"))
}
