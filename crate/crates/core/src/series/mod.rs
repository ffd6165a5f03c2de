//! Daily series data model, ingestion, validation and exposure handling.
//!
//! A [`DailySeries`] is one city-level record per calendar day. Outcome counts
//! are stored per stratum (cause × age) in the order given by
//! [`DailySeries::strata`]; a series read for the design phase carries no
//! strata at all.

mod ingest;
mod treatment;
mod validate;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use ingest::{read_csv, read_csv_from, write_csv, OutcomeMode, RawRecord, RawSeries, TotalKey};
pub use treatment::{
    assign_treatment, derive_indicators, lag_mean, DayFlags, IndicatorRules, TreatmentAssignment,
};
pub use validate::{validate, GapPolicy};

/// One outcome stratum, e.g. cause `cardiovascular`, age `75+`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stratum {
    pub cause: String,
    pub age: String,
}

impl Stratum {
    pub fn new(cause: impl Into<String>, age: impl Into<String>) -> Self {
        Self {
            cause: cause.into(),
            age: age.into(),
        }
    }

    /// Column name used by the delimited file schema.
    pub fn column_name(&self) -> String {
        format!("y.{}.{}", self.cause, self.age)
    }
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} / {}", self.cause, self.age)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    /// Daily mean concentration (µg/m³).
    pub exposure: f64,
    /// Daily mean temperature (°C).
    pub temperature: f64,
    /// Relative humidity (%).
    pub humidity: f64,
    pub influenza: bool,
    pub holiday: bool,
    /// Counts aligned with [`DailySeries::strata`].
    pub outcomes: Vec<u32>,
}

/// Validated, contiguous daily series. Construct through [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    strata: Vec<Stratum>,
    records: Vec<DailyRecord>,
}

impl DailySeries {
    pub(crate) fn from_parts(strata: Vec<Stratum>, records: Vec<DailyRecord>) -> Self {
        Self { strata, records }
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn records(&self) -> &[DailyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_outcomes(&self) -> bool {
        !self.strata.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.records.iter().map(|r| r.date).collect()
    }

    pub fn exposure(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.exposure).collect()
    }

    pub fn temperature(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.temperature).collect()
    }

    pub fn humidity(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.humidity).collect()
    }

    pub fn influenza(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.influenza).collect()
    }

    pub fn holiday(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.holiday).collect()
    }

    pub fn stratum_index(&self, stratum: &Stratum) -> Option<usize> {
        self.strata.iter().position(|s| s == stratum)
    }

    /// Per-day counts of one stratum.
    pub fn outcome(&self, stratum_idx: usize) -> Vec<u32> {
        self.records
            .iter()
            .map(|r| r.outcomes[stratum_idx])
            .collect()
    }

    /// Per-day sum over the selected strata.
    pub fn outcome_sum(&self, stratum_indices: &[usize]) -> Vec<u64> {
        self.records
            .iter()
            .map(|r| stratum_indices.iter().map(|&k| r.outcomes[k] as u64).sum())
            .collect()
    }

    /// Distinct cause labels in first-appearance order.
    pub fn causes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.strata {
            if !out.contains(&s.cause) {
                out.push(s.cause.clone());
            }
        }
        out
    }

    /// Distinct age labels in first-appearance order.
    pub fn ages(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.strata {
            if !out.contains(&s.age) {
                out.push(s.age.clone());
            }
        }
        out
    }

    /// The same series with outcome columns removed.
    pub fn without_outcomes(&self) -> Self {
        Self {
            strata: Vec::new(),
            records: self
                .records
                .iter()
                .map(|r| DailyRecord {
                    outcomes: Vec::new(),
                    ..r.clone()
                })
                .collect(),
        }
    }
}
