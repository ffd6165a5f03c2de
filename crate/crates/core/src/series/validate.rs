use serde::{Deserialize, Serialize};

use super::ingest::{RawSeries, TotalKey};
use super::{DailyRecord, DailySeries};
use crate::error::{Error, Result};

/// Handling of missing covariate cells (exposure, temperature, humidity).
/// Outcome counts are never imputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapPolicy {
    /// Any missing covariate cell is an error.
    Strict,
    /// Linearly interpolate runs of at most `max_gap` missing days bounded by
    /// observed values on both sides.
    Interpolate { max_gap: usize },
}

impl Default for GapPolicy {
    fn default() -> Self {
        GapPolicy::Interpolate { max_gap: 3 }
    }
}

pub fn validate(raw: &RawSeries, policy: GapPolicy) -> Result<DailySeries> {
    let recs = &raw.records;
    if recs.is_empty() {
        return Err(Error::Validation("series has no rows".into()));
    }
    for pair in recs.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.date <= a.date {
            return Err(Error::Parse {
                row: b.line,
                message: format!("date {} does not follow {}", b.date, a.date),
            });
        }
        if b.date != a.date.succ_opt().expect("date overflow") {
            return Err(Error::Validation(format!(
                "days missing between {} and {}: outcome counts must be observed for every day",
                a.date, b.date
            )));
        }
    }

    let exposure = fill("exposure", raw, |r| r.exposure, policy)?;
    let temperature = fill("temperature", raw, |r| r.temperature, policy)?;
    let humidity = fill("humidity", raw, |r| r.humidity, policy)?;

    let mut records = Vec::with_capacity(recs.len());
    for (i, r) in recs.iter().enumerate() {
        if exposure[i] < 0.0 {
            return Err(Error::Parse {
                row: r.line,
                message: format!("negative exposure {} on {}", exposure[i], r.date),
            });
        }
        if !(0.0..=100.0).contains(&humidity[i]) {
            return Err(Error::Parse {
                row: r.line,
                message: format!("humidity {} outside [0, 100] on {}", humidity[i], r.date),
            });
        }
        let mut outcomes = Vec::with_capacity(r.outcomes.len());
        for (k, cell) in r.outcomes.iter().enumerate() {
            let stratum = &raw.strata[k];
            let v = cell.ok_or_else(|| Error::Parse {
                row: r.line,
                message: format!("missing count for {} on {}", stratum.column_name(), r.date),
            })?;
            outcomes.push(to_count(v, &stratum.column_name(), r.line, r)?);
        }
        for (key, cell) in raw.total_keys.iter().zip(&r.totals) {
            let name = total_name(key);
            let v = cell.ok_or_else(|| Error::Parse {
                row: r.line,
                message: format!("missing count for {name} on {}", r.date),
            })?;
            let supplied = to_count(v, &name, r.line, r)? as u64;
            let summed: u64 = raw
                .strata
                .iter()
                .zip(&outcomes)
                .filter(|(s, _)| {
                    key.cause.as_ref().is_none_or(|c| *c == s.cause)
                        && key.age.as_ref().is_none_or(|a| *a == s.age)
                })
                .map(|(_, &c)| c as u64)
                .sum();
            if supplied != summed {
                return Err(Error::Parse {
                    row: r.line,
                    message: format!(
                        "{name} = {supplied} on {} but its strata sum to {summed}",
                        r.date
                    ),
                });
            }
        }
        records.push(DailyRecord {
            date: r.date,
            exposure: exposure[i],
            temperature: temperature[i],
            humidity: humidity[i],
            influenza: r.influenza,
            holiday: r.holiday,
            outcomes,
        });
    }
    Ok(DailySeries::from_parts(raw.strata.clone(), records))
}

fn total_name(key: &TotalKey) -> String {
    format!(
        "y.{}.{}",
        key.cause.as_deref().unwrap_or("all"),
        key.age.as_deref().unwrap_or("all")
    )
}

fn to_count(v: i64, name: &str, line: usize, r: &super::RawRecord) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Parse {
        row: line,
        message: format!("{name}: invalid count {v} on {}", r.date),
    })
}

fn fill(
    field: &'static str,
    raw: &RawSeries,
    get: impl Fn(&super::RawRecord) -> Option<f64>,
    policy: GapPolicy,
) -> Result<Vec<f64>> {
    let recs = &raw.records;
    let vals: Vec<Option<f64>> = recs.iter().map(&get).collect();
    let max_gap = match policy {
        GapPolicy::Strict => 0,
        GapPolicy::Interpolate { max_gap } => max_gap,
    };
    let mut out = vec![0.0; vals.len()];
    let mut i = 0;
    while i < vals.len() {
        if let Some(v) = vals[i] {
            out[i] = v;
            i += 1;
            continue;
        }
        let start = i;
        while i < vals.len() && vals[i].is_none() {
            i += 1;
        }
        let len = i - start;
        let bounded = start > 0 && i < vals.len();
        if len > max_gap || !bounded {
            return Err(Error::Gap {
                field,
                from: recs[start].date.to_string(),
                to: recs[i - 1].date.to_string(),
                len,
                max: max_gap,
            });
        }
        let (lo, hi) = (out[start - 1], vals[i].expect("bounded run"));
        let span = (len + 1) as f64;
        for (step, slot) in out[start..i].iter_mut().enumerate() {
            let frac = (step + 1) as f64 / span;
            *slot = lo + (hi - lo) * frac;
        }
    }
    Ok(out)
}
