//! Two-sample tests used as balance diagnostics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const ANGLE_EPS: f64 = 1e-9;

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with `n - 1` denominator.
pub(crate) fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Two-sided Welch t-test p-value (Welch–Satterthwaite degrees of freedom).
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Validation(
            "Welch test needs at least two observations per group".into(),
        ));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (
        sample_var(a) / a.len() as f64,
        sample_var(b) / b.len() as f64,
    );
    let se2 = va + vb;
    let diff = ma - mb;
    if se2 == 0.0 {
        return Ok(if diff == 0.0 { 1.0 } else { 0.0 });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Numerical(format!("t distribution: {e}")))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// Two-sided two-sample z-test for proportions with pooled variance and no
/// continuity correction.
pub fn prop_test(count_a: usize, n_a: usize, count_b: usize, n_b: usize) -> Result<f64> {
    if n_a == 0 || n_b == 0 || count_a > n_a || count_b > n_b {
        return Err(Error::Validation(format!(
            "invalid proportions {count_a}/{n_a} and {count_b}/{n_b}"
        )));
    }
    let (na, nb) = (n_a as f64, n_b as f64);
    let (pa, pb) = (count_a as f64 / na, count_b as f64 / nb);
    let pooled = (count_a + count_b) as f64 / (na + nb);
    let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
    if se == 0.0 {
        return Ok(1.0);
    }
    let z = (pa - pb) / se;
    Ok(erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
}

/// Mid-month angle 2π(month − 0.5)/12.
pub fn month_angle(month: u32) -> f64 {
    2.0 * PI * (month as f64 - 0.5) / 12.0
}

fn wrap(theta: f64) -> f64 {
    theta.rem_euclid(2.0 * PI)
}

fn arc_distance(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    d.min(2.0 * PI - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularMedian {
    /// In [0, 2π).
    pub angle: f64,
    /// False when several observed angles minimise the mean arc distance.
    pub unique: bool,
}

/// Sample circular median: the observed angle minimising the total arc
/// distance to all observations; ties go to the smallest angle in [0, 2π).
pub fn circular_median(angles: &[f64]) -> Result<CircularMedian> {
    if angles.is_empty() {
        return Err(Error::Validation("circular median of no angles".into()));
    }
    let mut candidates: Vec<f64> = angles.iter().map(|&a| wrap(a)).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup_by(|a, b| (*a - *b).abs() < ANGLE_EPS);
    let scored: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&c| (angles.iter().map(|&a| arc_distance(a, c)).sum::<f64>(), c))
        .collect();
    let best = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * (1.0 + best);
    let mut winners = scored.iter().filter(|s| s.0 <= best + tol);
    let first = winners.next().expect("nonempty");
    Ok(CircularMedian {
        angle: first.1,
        unique: winners.next().is_none(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularTest {
    pub median: CircularMedian,
    /// Per group: (observations in the half-circle after the median, group size).
    pub counts: Vec<(usize, usize)>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Set when the 2×g table has an empty row or a group sits entirely on the median.
    pub degenerate: bool,
}

/// Common-median test for g ≥ 2 samples of angles.
///
/// With θ̂ the combined-sample circular median, each observation is classed
/// by whether it falls in the half-circle (θ̂, θ̂ + π]; the resulting 2 × g
/// table gives a Pearson chi-square statistic on g − 1 degrees of freedom.
pub fn circular_median_test(groups: &[Vec<f64>]) -> Result<CircularTest> {
    if groups.len() < 2 || groups.iter().any(Vec::is_empty) {
        return Err(Error::Validation(
            "circular median test needs at least two nonempty groups".into(),
        ));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let median = circular_median(&all)?;
    let mut counts = Vec::with_capacity(groups.len());
    let mut degenerate = false;
    for g in groups {
        let mut above = 0;
        let mut at_median = 0;
        for &a in g {
            let phi = wrap(a - median.angle);
            if phi <= ANGLE_EPS || phi >= 2.0 * PI - ANGLE_EPS {
                at_median += 1;
            } else if phi <= PI + ANGLE_EPS {
                above += 1;
            }
        }
        degenerate |= at_median == g.len();
        counts.push((above, g.len()));
    }
    let n_total = all.len() as f64;
    let m_total: usize = counts.iter().map(|c| c.0).sum();
    let df = groups.len() - 1;
    if m_total == 0 || m_total == all.len() {
        return Ok(CircularTest {
            median,
            counts,
            statistic: 0.0,
            df,
            p_value: 1.0,
            degenerate: true,
        });
    }
    let row_share = [m_total as f64 / n_total, 1.0 - m_total as f64 / n_total];
    let mut statistic = 0.0;
    for &(above, n) in &counts {
        let observed = [above as f64, (n - above) as f64];
        for r in 0..2 {
            let expected = row_share[r] * n as f64;
            statistic += (observed[r] - expected).powi(2) / expected;
        }
    }
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    let p_value = chi.sf(statistic).clamp(0.0, 1.0);
    Ok(CircularTest {
        median,
        counts,
        statistic,
        df,
        p_value,
        degenerate,
    })
}
