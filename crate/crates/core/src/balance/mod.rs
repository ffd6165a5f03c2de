//! Covariate balance before and after matching.
//!
//! Standardised differences share one denominator, the pre-matching pooled
//! standard deviation `sqrt((s²_treated + s²_control) / 2)`; only the
//! comparison mean changes after matching. Matched-control statistics treat
//! the matched sample as a multiset, so a control used K times counts K times.

mod hypothesis;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

pub use hypothesis::{
    circular_median, circular_median_test, month_angle, prop_test, welch_t, CircularMedian,
    CircularTest,
};
use hypothesis::{mean, sample_var};

use crate::error::{Error, Result};
use crate::matching::MatchMap;
use crate::series::{derive_indicators, lag_mean, DailySeries, IndicatorRules};

fn split(x: &[f64], w: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let treated = x.iter().zip(w).filter(|p| *p.1).map(|p| *p.0).collect();
    let control = x.iter().zip(w).filter(|p| !*p.1).map(|p| *p.0).collect();
    (treated, control)
}

fn matched_values(x: &[f64], m: &MatchMap) -> Vec<f64> {
    m.pairs().iter().map(|p| x[p.control]).collect()
}

fn pooled_sd(treated: &[f64], control: &[f64]) -> Result<f64> {
    if treated.len() < 2 || control.len() < 2 {
        return Err(Error::Validation(
            "standardised difference needs at least two treated and two control days".into(),
        ));
    }
    Ok(((sample_var(treated) + sample_var(control)) / 2.0).sqrt())
}

/// δ_pre = (x̄_t − x̄_c) / pooled SD; `None` when the pooled SD is zero.
pub fn std_diff_pre(x: &[f64], w: &[bool]) -> Result<Option<f64>> {
    check_len(x, w)?;
    let (t, c) = split(x, w);
    let sd = pooled_sd(&t, &c)?;
    Ok((sd > 0.0).then(|| (mean(&t) - mean(&c)) / sd))
}

/// δ_post = (x̄_t − x̄_matched) / pre-matching pooled SD.
pub fn std_diff_post(x: &[f64], w: &[bool], m: &MatchMap) -> Result<Option<f64>> {
    check_len(x, w)?;
    if m.w() != w {
        return Err(Error::Dimension(
            "match map built for another treatment vector".into(),
        ));
    }
    let (t, c) = split(x, w);
    let sd = pooled_sd(&t, &c)?;
    let matched = matched_values(x, m);
    Ok((sd > 0.0).then(|| (mean(&t) - mean(&matched)) / sd))
}

/// 100 · (δ_pre − δ_post) / δ_pre; `None` when δ_pre is zero.
pub fn pct_bias(delta_pre: f64, delta_post: f64) -> Option<f64> {
    (delta_pre != 0.0).then(|| 100.0 * (delta_pre - delta_post) / delta_pre)
}

fn check_len(x: &[f64], w: &[bool]) -> Result<()> {
    if x.len() == w.len() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{} values for {} days",
            x.len(),
            w.len()
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum CovariateValues {
    Continuous(Vec<f64>),
    Binary(Vec<bool>),
    /// Calendar month 1–12, compared on the circle.
    Month(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub values: CovariateValues,
}

impl Covariate {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values: CovariateValues::Continuous(values),
        }
    }

    pub fn binary(name: impl Into<String>, values: Vec<bool>) -> Self {
        Self {
            name: name.into(),
            values: CovariateValues::Binary(values),
        }
    }

    pub fn month(name: impl Into<String>, values: Vec<u32>) -> Self {
        Self {
            name: name.into(),
            values: CovariateValues::Month(values),
        }
    }

    fn len(&self) -> usize {
        match &self.values {
            CovariateValues::Continuous(v) => v.len(),
            CovariateValues::Binary(v) => v.len(),
            CovariateValues::Month(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Continuous,
    Binary,
    Month,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub name: String,
    pub kind: RowKind,
    /// Means (proportions for binary rows); absent for month rows.
    pub treated: Option<f64>,
    pub control: Option<f64>,
    pub matched: Option<f64>,
    pub p_pre: f64,
    pub p_post: f64,
    pub delta_pre: Option<f64>,
    pub delta_post: Option<f64>,
    /// Signed; absent when δ_pre is undefined or zero.
    pub pct_bias: Option<f64>,
    pub notes: Vec<String>,
}

pub const PROPENSITY_ROW: &str = "Estimated propensity score";

/// One row per covariate, the propensity score first.
///
/// Continuous rows use Welch tests, binary rows two-proportion z-tests and
/// month rows the circular common-median test. Post-matching comparisons are
/// treated days against the matched-control multiset.
pub fn balance_table(
    scores: &[f64],
    covariates: &[Covariate],
    m: &MatchMap,
) -> Result<Vec<BalanceRow>> {
    let w = m.w();
    let mut rows = Vec::with_capacity(covariates.len() + 1);
    let score_row = Covariate::continuous(PROPENSITY_ROW, scores.to_vec());
    for cov in std::iter::once(&score_row).chain(covariates) {
        if cov.len() != w.len() {
            return Err(Error::Dimension(format!(
                "covariate `{}` has {} values for {} days",
                cov.name,
                cov.len(),
                w.len()
            )));
        }
        rows.push(balance_row(cov, m)?);
    }
    Ok(rows)
}

fn delta_row(x: &[f64], m: &MatchMap) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    let pre = std_diff_pre(x, m.w())?;
    let post = std_diff_post(x, m.w(), m)?;
    let bias = match (pre, post) {
        (Some(a), Some(b)) => pct_bias(a, b),
        _ => None,
    };
    Ok((pre, post, bias))
}

fn balance_row(cov: &Covariate, m: &MatchMap) -> Result<BalanceRow> {
    let w = m.w();
    let mut notes = Vec::new();
    match &cov.values {
        CovariateValues::Continuous(x) => {
            let (t, c) = split(x, w);
            let matched = matched_values(x, m);
            let (delta_pre, delta_post, pct_bias) = delta_row(x, m)?;
            if delta_pre.is_none() {
                notes.push("zero pooled variance".into());
            }
            Ok(BalanceRow {
                name: cov.name.clone(),
                kind: RowKind::Continuous,
                treated: Some(mean(&t)),
                control: Some(mean(&c)),
                matched: Some(mean(&matched)),
                p_pre: welch_t(&t, &c)?,
                p_post: welch_t(&t, &matched)?,
                delta_pre,
                delta_post,
                pct_bias,
                notes,
            })
        }
        CovariateValues::Binary(b) => {
            let x: Vec<f64> = b.iter().map(|&v| f64::from(u8::from(v))).collect();
            let (t, c) = split(&x, w);
            let matched = matched_values(&x, m);
            let count = |v: &[f64]| v.iter().filter(|&&z| z == 1.0).count();
            let (delta_pre, delta_post, pct_bias) = delta_row(&x, m)?;
            if delta_pre.is_none() {
                notes.push("zero pooled variance".into());
            }
            Ok(BalanceRow {
                name: cov.name.clone(),
                kind: RowKind::Binary,
                treated: Some(mean(&t)),
                control: Some(mean(&c)),
                matched: Some(mean(&matched)),
                p_pre: prop_test(count(&t), t.len(), count(&c), c.len())?,
                p_post: prop_test(count(&t), t.len(), count(&matched), matched.len())?,
                delta_pre,
                delta_post,
                pct_bias,
                notes,
            })
        }
        CovariateValues::Month(months) => {
            let angles: Vec<f64> = months.iter().map(|&mo| month_angle(mo)).collect();
            let (t, c) = split(&angles, w);
            let matched = matched_values(&angles, m);
            let pre = circular_median_test(&[t.clone(), c])?;
            let post = circular_median_test(&[t, matched])?;
            if pre.degenerate {
                notes.push("pre-matching circular test degenerate".into());
            }
            if post.degenerate {
                notes.push("post-matching circular test degenerate".into());
            }
            Ok(BalanceRow {
                name: cov.name.clone(),
                kind: RowKind::Month,
                treated: None,
                control: None,
                matched: None,
                p_pre: pre.p_value,
                p_post: post.p_value,
                delta_pre: None,
                delta_post: None,
                pct_bias: None,
                notes,
            })
        }
    }
}

/// The covariate set of the standard balance report (the propensity score is
/// added by [`balance_table`]).
pub fn standard_covariates(
    series: &DailySeries,
    rules: &IndicatorRules,
    temperature_lag: usize,
) -> Result<Vec<Covariate>> {
    let flags = derive_indicators(series, rules);
    let temp = lag_mean(&series.temperature(), temperature_lag)?;
    Ok(vec![
        Covariate::continuous(
            format!(
                "Temperature, lag 0-{} (°C)",
                temperature_lag.saturating_sub(1)
            ),
            temp,
        ),
        Covariate::continuous("Relative humidity (%)", series.humidity()),
        Covariate::binary(
            "Saturdays and Sundays",
            flags.iter().map(|f| f.weekend).collect(),
        ),
        Covariate::month(
            "Calendar month",
            series.records().iter().map(|r| r.date.month()).collect(),
        ),
        Covariate::binary("Influenza epidemics", series.influenza()),
        Covariate::binary("Heat episodes", flags.iter().map(|f| f.heat).collect()),
        Covariate::binary("Summer days", flags.iter().map(|f| f.warm_season).collect()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{nn_match, MatchPair};

    #[test]
    fn std_diff_pre_examples() {
        let x = [1.0, 2.0, 3.0, 0.0, 1.0, 2.0];
        let w = [true, true, true, false, false, false];
        assert!((std_diff_pre(&x, &w).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let flipped: Vec<bool> = w.iter().map(|b| !b).collect();
        assert!((std_diff_pre(&x, &flipped).unwrap().unwrap() + 1.0).abs() < 1e-15);
        let same = [1.0, 2.0, 1.0, 2.0];
        assert_eq!(
            std_diff_pre(&same, &[true, true, false, false]).unwrap(),
            Some(0.0)
        );
        let flat = [5.0; 4];
        assert_eq!(
            std_diff_pre(&flat, &[true, true, false, false]).unwrap(),
            None
        );
        assert!(std_diff_pre(&[1.0, 2.0, 3.0], &[true, false, false]).is_err());
    }

    #[test]
    fn std_diff_post_perfect_and_degenerate() {
        // treated 0,1 paired with identical controls 3,2
        let x = [1.0, 2.0, 2.0, 1.0, 7.0];
        let w = [true, true, false, false, false];
        let m = MatchMap::from_pairs(
            w.to_vec(),
            vec![
                MatchPair {
                    treated: 0,
                    control: 3,
                    distance: 0.0,
                },
                MatchPair {
                    treated: 1,
                    control: 2,
                    distance: 0.0,
                },
            ],
        )
        .unwrap();
        assert_eq!(std_diff_post(&x, &w, &m).unwrap(), Some(0.0));

        // each of the three controls used once: matched set = control set
        let x = [4.0, 6.0, 9.0, 1.0, 2.5, 0.5];
        let w = [true, true, true, false, false, false];
        let m = MatchMap::from_pairs(
            w.to_vec(),
            (0..3)
                .map(|i| MatchPair {
                    treated: i,
                    control: 3 + i,
                    distance: 0.0,
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(
            std_diff_post(&x, &w, &m).unwrap(),
            std_diff_pre(&x, &w).unwrap()
        );
    }

    #[test]
    fn pct_bias_examples() {
        assert_eq!(pct_bias(1.810, 0.0), Some(100.0));
        assert_eq!(pct_bias(0.7, 0.7), Some(0.0));
        let temperature = pct_bias(0.914, 0.013).unwrap();
        assert!((temperature - 98.6).abs() < 0.05);
        let humidity = pct_bias(0.456, 0.014).unwrap();
        assert!((humidity - 96.9).abs() < 0.05);
        assert_eq!(pct_bias(0.0, 0.1), None);
        assert!(pct_bias(0.1, 0.2).unwrap() < 0.0);
    }

    #[test]
    fn table_rows_and_self_copy() {
        // every treated day has a control twin with identical covariates
        let n = 8;
        let temp = vec![3.0, 5.0, 8.0, 13.0, 3.0, 5.0, 8.0, 13.0];
        let w: Vec<bool> = (0..n).map(|i| i < 4).collect();
        let scores = vec![0.2, 0.4, 0.6, 0.8, 0.2, 0.4, 0.6, 0.8];
        let m = nn_match(&scores, &w).unwrap();
        let covs = vec![
            Covariate::continuous("temp", temp),
            Covariate::binary(
                "flag",
                vec![true, false, true, false, true, false, true, false],
            ),
            Covariate::month("month", vec![1, 2, 3, 4, 1, 2, 3, 4]),
        ];
        let rows = balance_table(&scores, &covs, &m).unwrap();
        assert_eq!(rows.len(), covs.len() + 1);
        assert_eq!(rows[0].name, PROPENSITY_ROW);
        for r in &rows {
            if r.kind != RowKind::Month {
                assert_eq!(r.delta_post, Some(0.0));
                // identical groups before matching: δ_pre = 0, no % bias
                assert_eq!(r.pct_bias, None);
            }
            assert!((0.0..=1.0).contains(&r.p_pre) && (0.0..=1.0).contains(&r.p_post));
        }
        assert_eq!(rows[2].treated, Some(0.5));
    }
}
