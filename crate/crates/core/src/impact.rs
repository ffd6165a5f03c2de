//! Analysis phase: attributable-event totals from a fixed match map.
//!
//! Each treated day's missing low-exposure outcome is imputed by the count on
//! its matched control day. The variance follows the matching-estimator form
//! `s² = Σ_i (W_i − (1 − W_i) K(i))² σ²_i`, with σ²_i estimated from the day's
//! nearest same-group neighbours on the score scale. Every stratum reuses the
//! same match map, so stratum totals add up exactly.

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matching::{MatchMap, MatchPair};
use crate::series::DailySeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayImpact {
    pub day: usize,
    pub control: usize,
    pub observed: u64,
    pub matched: u64,
    /// observed − matched; may be negative.
    pub ad: i64,
}

pub fn impute_and_diff(outcomes: &[u64], m: &MatchMap) -> Result<Vec<DayImpact>> {
    impute_pairs(outcomes, m.pairs(), m.len())
}

fn impute_pairs(outcomes: &[u64], pairs: &[MatchPair], n: usize) -> Result<Vec<DayImpact>> {
    if outcomes.len() != n {
        return Err(Error::Dimension(format!(
            "{} outcome values for {n} days",
            outcomes.len()
        )));
    }
    Ok(pairs
        .iter()
        .map(|p| {
            let observed = outcomes[p.treated];
            let matched = outcomes[p.control];
            DayImpact {
                day: p.treated,
                control: p.control,
                observed,
                matched,
                ad: observed as i64 - matched as i64,
            }
        })
        .collect())
}

pub fn total_ad(days: &[DayImpact]) -> i64 {
    days.iter().map(|d| d.ad).sum()
}

/// For every day, its `m_neighbors` closest days of the same treatment group
/// by score distance (itself excluded, ties to the earliest day).
pub fn variance_neighbors(
    scores: &[f64],
    w: &[bool],
    m_neighbors: usize,
) -> Result<Vec<Vec<usize>>> {
    if scores.len() != w.len() {
        return Err(Error::Dimension(
            "scores and treatment differ in length".into(),
        ));
    }
    if m_neighbors == 0 {
        return Err(Error::Validation(
            "need at least one variance neighbour".into(),
        ));
    }
    let mut out = vec![Vec::new(); w.len()];
    for group in [true, false] {
        let mut sorted: Vec<(f64, usize)> = (0..w.len())
            .filter(|&i| w[i] == group)
            .map(|i| (scores[i], i))
            .collect();
        if sorted.is_empty() {
            continue;
        }
        if sorted.len() <= m_neighbors {
            return Err(Error::Validation(format!(
                "{} group has {} day(s); {m_neighbors} same-group neighbour(s) required",
                if group { "treated" } else { "control" },
                sorted.len()
            )));
        }
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for pos in 0..sorted.len() {
            out[sorted[pos].1] = nearest_in_group(&sorted, pos, m_neighbors);
        }
    }
    Ok(out)
}

fn nearest_in_group(sorted: &[(f64, usize)], pos: usize, m: usize) -> Vec<usize> {
    let s = sorted[pos].0;
    let mut left = pos;
    let mut right = pos + 1;
    let mut taken: Vec<(f64, usize)> = Vec::new();
    loop {
        let dl = if left > 0 {
            (s - sorted[left - 1].0).abs()
        } else {
            f64::INFINITY
        };
        let dr = sorted.get(right).map_or(f64::INFINITY, |c| (c.0 - s).abs());
        let d = dl.min(dr);
        if d.is_infinite() {
            break;
        }
        if taken.len() >= m && d > taken[taken.len() - 1].0 {
            break;
        }
        if dl <= dr {
            left -= 1;
            taken.push((dl, sorted[left].1));
        } else {
            taken.push((dr, sorted[right].1));
            right += 1;
        }
    }
    taken.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    taken.into_iter().take(m).map(|t| t.1).collect()
}

/// σ²_i = (1/#H(i)) Σ_{j ∈ H(i) ∪ {i}} (Y_j − Ȳ)², Ȳ the mean over H(i) ∪ {i}.
pub fn conditional_variance_from(outcomes: &[u64], neighbors: &[Vec<usize>]) -> Result<Vec<f64>> {
    if outcomes.len() != neighbors.len() {
        return Err(Error::Dimension(
            "outcomes and neighbour sets differ in length".into(),
        ));
    }
    Ok(neighbors
        .iter()
        .enumerate()
        .map(|(i, h)| {
            if h.is_empty() {
                return 0.0;
            }
            let set = || {
                std::iter::once(i)
                    .chain(h.iter().copied())
                    .map(|j| outcomes[j] as f64)
            };
            let mean = set().sum::<f64>() / (h.len() + 1) as f64;
            set().map(|y| (y - mean).powi(2)).sum::<f64>() / h.len() as f64
        })
        .collect())
}

pub fn conditional_variance(
    outcomes: &[u64],
    scores: &[f64],
    w: &[bool],
    m_neighbors: usize,
) -> Result<Vec<f64>> {
    let nb = variance_neighbors(scores, w, m_neighbors)?;
    conditional_variance_from(outcomes, &nb)
}

/// Σ_i (W_i − (1 − W_i) K(i))² σ²_i.
pub fn variance_ad(m: &MatchMap, sigma2: &[f64]) -> Result<f64> {
    variance_weighted(m.w(), m.k(), sigma2)
}

fn variance_weighted(w: &[bool], k: &[usize], sigma2: &[f64]) -> Result<f64> {
    if sigma2.len() != w.len() {
        return Err(Error::Dimension("σ² and treatment differ in length".into()));
    }
    Ok(w.iter()
        .zip(k)
        .zip(sigma2)
        .map(|((&t, &k), &s)| {
            let weight = if t { 1.0 } else { k as f64 };
            weight * weight * s
        })
        .sum())
}

/// Normal-approximation interval `ad ± z_{(1+level)/2} √s²`.
pub fn ci(ad: f64, s2: f64, level: f64) -> Result<(f64, f64)> {
    if !s2.is_finite() || s2 < 0.0 {
        return Err(Error::Numerical(format!("invalid variance {s2}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let z = Normal::standard().inverse_cdf((1.0 + level) / 2.0);
    let half = z * s2.sqrt();
    Ok((ad - half, ad + half))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactEstimate {
    /// `None` means all causes.
    pub cause: Option<String>,
    /// `None` means all ages.
    pub age: Option<String>,
    pub ad: i64,
    pub s2: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_treated_used: usize,
}

impl ImpactEstimate {
    pub fn label(&self) -> String {
        format!(
            "{} / {}",
            self.cause.as_deref().unwrap_or("all causes"),
            self.age.as_deref().unwrap_or("all ages")
        )
    }
}

/// Which treated days a flag removes in a sensitivity analysis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionMode {
    /// Drop a pair when the treated day or its matched control is flagged.
    #[default]
    TreatedOrMatch,
    /// Drop a pair only when the treated day is flagged.
    TreatedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpactOptions {
    pub level: f64,
    /// Same-group neighbours used for σ² (M).
    pub variance_neighbors: usize,
}

impl Default for ImpactOptions {
    fn default() -> Self {
        Self {
            level: 0.90,
            variance_neighbors: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactTable {
    pub causes: Vec<String>,
    pub ages: Vec<String>,
    pub level: f64,
    pub n_treated_used: usize,
    /// Row-major over `causes + [all]` × `ages + [all]`.
    pub estimates: Vec<ImpactEstimate>,
    pub warnings: Vec<String>,
}

impl ImpactTable {
    pub fn get(&self, cause: Option<&str>, age: Option<&str>) -> Option<&ImpactEstimate> {
        self.estimates
            .iter()
            .find(|e| e.cause.as_deref() == cause && e.age.as_deref() == age)
    }

    pub fn total(&self) -> &ImpactEstimate {
        self.get(None, None).expect("table always has a total")
    }
}

/// One estimate per cause × age cell, per cause and age margin, and overall.
pub fn stratified_impact(
    series: &DailySeries,
    m: &MatchMap,
    scores: &[f64],
    opts: &ImpactOptions,
) -> Result<ImpactTable> {
    impact_over_pairs(series, m, scores, m.pairs(), opts, Vec::new())
}

/// Recomputes the table over pairs that survive `flag`; the match map itself
/// is not changed.
pub fn sensitivity_exclude(
    series: &DailySeries,
    m: &MatchMap,
    scores: &[f64],
    flag: &[bool],
    mode: ExclusionMode,
    opts: &ImpactOptions,
) -> Result<ImpactTable> {
    if flag.len() != m.len() {
        return Err(Error::Dimension(format!(
            "{} exclusion flags for {} days",
            flag.len(),
            m.len()
        )));
    }
    let kept: Vec<MatchPair> = m
        .pairs()
        .iter()
        .filter(|p| !flag[p.treated] && (mode == ExclusionMode::TreatedOnly || !flag[p.control]))
        .copied()
        .collect();
    let mut warnings = Vec::new();
    if kept.is_empty() {
        let msg =
            "every treated day was excluded; attributable total is over an empty set".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    impact_over_pairs(series, m, scores, &kept, opts, warnings)
}

fn impact_over_pairs(
    series: &DailySeries,
    m: &MatchMap,
    scores: &[f64],
    pairs: &[MatchPair],
    opts: &ImpactOptions,
    warnings: Vec<String>,
) -> Result<ImpactTable> {
    if !series.has_outcomes() {
        return Err(Error::Validation("series has no outcome strata".into()));
    }
    if series.len() != m.len() || scores.len() != m.len() {
        return Err(Error::Dimension(format!(
            "series of {} days, match map of {}, {} scores",
            series.len(),
            m.len(),
            scores.len()
        )));
    }
    let neighbors = variance_neighbors(scores, m.w(), opts.variance_neighbors)?;
    let mut k = vec![0usize; m.len()];
    for p in pairs {
        k[p.control] += 1;
    }
    let used: Vec<bool> = {
        let mut u = vec![false; m.len()];
        for p in pairs {
            u[p.treated] = true;
        }
        u
    };

    let causes = series.causes();
    let ages = series.ages();
    let cause_keys: Vec<Option<String>> = causes
        .iter()
        .cloned()
        .map(Some)
        .chain(std::iter::once(None))
        .collect();
    let age_keys: Vec<Option<String>> = ages
        .iter()
        .cloned()
        .map(Some)
        .chain(std::iter::once(None))
        .collect();

    let mut estimates = Vec::new();
    for cause in &cause_keys {
        for age in &age_keys {
            let idx: Vec<usize> = series
                .strata()
                .iter()
                .enumerate()
                .filter(|(_, s)| {
                    cause.as_ref().is_none_or(|c| *c == s.cause)
                        && age.as_ref().is_none_or(|a| *a == s.age)
                })
                .map(|(i, _)| i)
                .collect();
            let outcome = series.outcome_sum(&idx);
            let days = impute_pairs(&outcome, pairs, m.len())?;
            let ad = total_ad(&days);
            let sigma2 = conditional_variance_from(&outcome, &neighbors)?;
            let w_used: Vec<bool> = m.w().iter().zip(&used).map(|(&t, &u)| t && u).collect();
            let s2 = variance_weighted(&w_used, &k, &sigma2)?;
            let (ci_low, ci_high) = ci(ad as f64, s2, opts.level)?;
            estimates.push(ImpactEstimate {
                cause: cause.clone(),
                age: age.clone(),
                ad,
                s2,
                ci_low,
                ci_high,
                n_treated_used: pairs.len(),
            });
        }
    }
    Ok(ImpactTable {
        causes,
        ages,
        level: opts.level,
        n_treated_used: pairs.len(),
        estimates,
        warnings,
    })
}
