//! Nearest-neighbour propensity-score matching with replacement (1:1).
//!
//! Only scores and treatment indicators are consulted; outcomes never enter
//! this module.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scale on which score distances are measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchScale {
    /// Fitted probability ê.
    #[default]
    Probability,
    /// Linear predictor logit(ê).
    LinearPredictor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub treated: usize,
    pub control: usize,
    pub distance: f64,
}

/// Treated day → matched control day, with per-day reuse counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchMap {
    w: Vec<bool>,
    pairs: Vec<MatchPair>,
    k: Vec<usize>,
}

impl MatchMap {
    /// Rebuilds a map from explicit pairs, checking every invariant.
    pub fn from_pairs(w: Vec<bool>, pairs: Vec<MatchPair>) -> Result<Self> {
        let n = w.len();
        let mut k = vec![0usize; n];
        let mut seen = vec![false; n];
        for p in &pairs {
            if p.treated >= n || p.control >= n {
                return Err(Error::Dimension(format!("pair {p:?} outside {n} days")));
            }
            if !w[p.treated] || w[p.control] {
                return Err(Error::Validation(format!(
                    "pair {} -> {} does not join a treated day to a control day",
                    p.treated, p.control
                )));
            }
            if std::mem::replace(&mut seen[p.treated], true) {
                return Err(Error::Validation(format!(
                    "treated day {} matched twice",
                    p.treated
                )));
            }
            k[p.control] += 1;
        }
        if let Some(missing) = (0..n).find(|&i| w[i] && !seen[i]) {
            return Err(Error::Validation(format!(
                "treated day {missing} has no match"
            )));
        }
        let mut pairs = pairs;
        pairs.sort_by_key(|p| p.treated);
        Ok(Self { w, pairs, k })
    }

    pub fn w(&self) -> &[bool] {
        &self.w
    }

    /// Pairs in increasing treated-day order.
    pub fn pairs(&self) -> &[MatchPair] {
        &self.pairs
    }

    /// K(i): times day `i` serves as a match (0 for treated days).
    pub fn k(&self) -> &[usize] {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn n_treated(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_controls(&self) -> usize {
        self.w.len() - self.pairs.len()
    }

    pub fn control_of(&self, treated: usize) -> Option<usize> {
        self.pairs
            .binary_search_by_key(&treated, |p| p.treated)
            .ok()
            .map(|i| self.pairs[i].control)
    }

    /// Matched controls as a multiset (one entry per treated day).
    pub fn matched_controls(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.control).collect()
    }
}

/// For each treated day, the control with the closest score; equidistant
/// controls resolve to the earliest day. Controls may be reused.
pub fn nn_match(scores: &[f64], w: &[bool]) -> Result<MatchMap> {
    if scores.len() != w.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} treatment values",
            scores.len(),
            w.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!("non-finite score {s}")));
    }
    let mut controls: Vec<(f64, usize)> = (0..w.len())
        .filter(|&i| !w[i])
        .map(|i| (scores[i], i))
        .collect();
    let has_treated = w.iter().any(|&t| t);
    if controls.is_empty() && has_treated {
        return Err(Error::NoControlDays);
    }
    controls.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let pairs = (0..w.len())
        .filter(|&i| w[i])
        .map(|i| {
            let (control, distance) = nearest(&controls, scores[i]);
            MatchPair {
                treated: i,
                control,
                distance,
            }
        })
        .collect();
    MatchMap::from_pairs(w.to_vec(), pairs)
}

/// Nearest entry of a (score, index)-sorted list; ties to the lowest index.
fn nearest(sorted: &[(f64, usize)], s: f64) -> (usize, f64) {
    let pos = sorted.partition_point(|c| c.0 < s);
    let left = pos.checked_sub(1).map(|j| (s - sorted[j].0).abs());
    let right = sorted.get(pos).map(|c| (c.0 - s).abs());
    let best = match (left, right) {
        (Some(l), Some(r)) => l.min(r),
        (Some(l), None) => l,
        (None, Some(r)) => r,
        (None, None) => unreachable!("at least one control"),
    };
    let mut winner = usize::MAX;
    let mut j = pos;
    while j > 0 && (s - sorted[j - 1].0).abs() == best {
        winner = winner.min(sorted[j - 1].1);
        j -= 1;
    }
    let mut j = pos;
    while j < sorted.len() && (sorted[j].0 - s).abs() == best {
        winner = winner.min(sorted[j].1);
        j += 1;
    }
    (winner, best)
}

/// Number of control days used K = 0, 1, 2, … times.
pub fn match_multiplicity(m: &MatchMap) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for (i, &treated) in m.w().iter().enumerate() {
        if !treated {
            *hist.entry(m.k()[i]).or_insert(0) += 1;
        }
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatedDistance {
    pub day: usize,
    pub distance: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub caliper: f64,
    pub treated_range: (f64, f64),
    pub control_range: (f64, f64),
    /// Treated scores outside the control range.
    pub n_outside_control_support: usize,
    pub treated: Vec<TreatedDistance>,
}

impl OverlapReport {
    pub fn flagged(&self) -> impl Iterator<Item = &TreatedDistance> {
        self.treated.iter().filter(|t| t.flagged)
    }

    pub fn n_flagged(&self) -> usize {
        self.flagged().count()
    }
}

/// Diagnostic only: flags treated days farther than `caliper` from every
/// control score. Nothing is dropped.
pub fn overlap_check(scores: &[f64], w: &[bool], caliper: f64) -> Result<OverlapReport> {
    if scores.len() != w.len() {
        return Err(Error::Dimension(
            "scores and treatment differ in length".into(),
        ));
    }
    let range = |treated: bool| {
        scores
            .iter()
            .zip(w)
            .filter(|(_, &t)| t == treated)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&s, _)| {
                (lo.min(s), hi.max(s))
            })
    };
    let treated_range = range(true);
    let control_range = range(false);
    if !treated_range.0.is_finite() {
        return Err(Error::NoTreatedDays);
    }
    if !control_range.0.is_finite() {
        return Err(Error::NoControlDays);
    }
    let mut controls: Vec<(f64, usize)> = (0..w.len())
        .filter(|&i| !w[i])
        .map(|i| (scores[i], i))
        .collect();
    controls.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let treated: Vec<TreatedDistance> = (0..w.len())
        .filter(|&i| w[i])
        .map(|day| {
            let (_, distance) = nearest(&controls, scores[day]);
            TreatedDistance {
                day,
                distance,
                flagged: distance > caliper,
            }
        })
        .collect();
    let n_outside_control_support = treated
        .iter()
        .filter(|t| scores[t.day] < control_range.0 || scores[t.day] > control_range.1)
        .count();
    Ok(OverlapReport {
        caliper,
        treated_range,
        control_range,
        n_outside_control_support,
        treated,
    })
}
