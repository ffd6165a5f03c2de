use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::DailySeries;
use crate::error::{Error, Result};

/// Trailing moving average over `window` days ending at each day.
///
/// The first `window - 1` days average over the available prefix, so the
/// output has the same length as the input.
pub fn lag_mean(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Validation("lag_mean: empty series".into()));
    }
    if window == 0 {
        return Err(Error::Validation(
            "lag_mean: window must be at least 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let start = (i + 1).saturating_sub(window);
        let slice = &values[start..=i];
        out.push(slice.iter().sum::<f64>() / slice.len() as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    pub threshold: f64,
    pub lag_window: usize,
    /// Lagged exposure per day.
    pub x_lagged: Vec<f64>,
    /// `true` for treated (high-exposure) days.
    pub w: Vec<bool>,
}

impl TreatmentAssignment {
    pub fn n_treated(&self) -> usize {
        self.w.iter().filter(|&&t| t).count()
    }

    pub fn n_controls(&self) -> usize {
        self.w.len() - self.n_treated()
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Day `i` is treated iff `x_lagged[i] >= threshold`.
pub fn assign_treatment(
    x_lagged: &[f64],
    threshold: f64,
    lag_window: usize,
) -> Result<TreatmentAssignment> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::Validation(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    if let Some(x) = x_lagged.iter().find(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("non-finite lagged exposure {x}")));
    }
    Ok(TreatmentAssignment {
        threshold,
        lag_window,
        x_lagged: x_lagged.to_vec(),
        w: x_lagged.iter().map(|&x| x >= threshold).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorRules {
    /// Heat day when temperature is strictly above this (°C).
    pub heat_threshold: f64,
    /// Warm season as inclusive (month, day) bounds.
    pub warm_season_start: (u32, u32),
    pub warm_season_end: (u32, u32),
}

impl Default for IndicatorRules {
    fn default() -> Self {
        Self {
            heat_threshold: 28.0,
            warm_season_start: (5, 1),
            warm_season_end: (9, 30),
        }
    }
}

impl IndicatorRules {
    pub fn is_warm_season(&self, date: NaiveDate) -> bool {
        let md = (date.month(), date.day());
        self.warm_season_start <= md && md <= self.warm_season_end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayFlags {
    pub heat: bool,
    pub july_august: bool,
    pub warm_season: bool,
    pub weekend: bool,
}

pub fn derive_indicators(series: &DailySeries, rules: &IndicatorRules) -> Vec<DayFlags> {
    series
        .records()
        .iter()
        .map(|r| DayFlags {
            heat: r.temperature > rules.heat_threshold,
            july_august: matches!(r.date.month(), 7 | 8),
            warm_season: rules.is_warm_season(r.date),
            weekend: matches!(r.date.weekday(), Weekday::Sat | Weekday::Sun),
        })
        .collect()
}
