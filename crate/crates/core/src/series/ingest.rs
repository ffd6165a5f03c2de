//! Delimited-text ingestion.
//!
//! Schema (comma-delimited, header required, any column order):
//!
//! | column        | content                                        |
//! |---------------|------------------------------------------------|
//! | `date`        | ISO-8601 calendar day (`YYYY-MM-DD`)           |
//! | `exposure`    | daily mean concentration, µg/m³                |
//! | `temperature` | daily mean temperature, °C                     |
//! | `humidity`    | relative humidity, %                           |
//! | `influenza`   | 0/1                                            |
//! | `holiday`     | 0/1                                            |
//! | `y.<cause>.<age>` | nonnegative integer count, one per stratum |
//!
//! Covariate cells may be empty or `NA`. A column `y.all.all`, `y.<cause>.all`
//! or `y.all.<age>` is read as a marginal total and checked against the cells.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{DailySeries, Stratum};
use crate::error::{Error, Result};

const REQUIRED: [&str; 6] = [
    "date",
    "exposure",
    "temperature",
    "humidity",
    "influenza",
    "holiday",
];

/// Whether outcome columns are parsed or skipped.
///
/// Design-phase stages read with [`OutcomeMode::Ignore`], so outcome cells are
/// never parsed before matching is complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeMode {
    Read,
    Ignore,
}

/// Marginal-total column key; `None` stands for `all`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TotalKey {
    pub cause: Option<String>,
    pub age: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// 1-based line number in the source file.
    pub line: usize,
    pub date: NaiveDate,
    pub exposure: Option<f64>,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    pub influenza: bool,
    pub holiday: bool,
    pub outcomes: Vec<Option<i64>>,
    pub totals: Vec<Option<i64>>,
}

/// Parsed but not yet validated series.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub strata: Vec<Stratum>,
    pub total_keys: Vec<TotalKey>,
    pub records: Vec<RawRecord>,
}

pub fn read_csv(path: impl AsRef<Path>, mode: OutcomeMode) -> Result<RawSeries> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv_from(file, mode)
}

pub fn read_csv_from<R: Read>(reader: R, mode: OutcomeMode) -> Result<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();

    let mut required_idx = [usize::MAX; 6];
    let mut strata = Vec::new();
    let mut stratum_cols = Vec::new();
    let mut total_keys = Vec::new();
    let mut total_cols = Vec::new();
    for (col, name) in headers.iter().enumerate() {
        if let Some(slot) = REQUIRED.iter().position(|r| *r == name) {
            if required_idx[slot] != usize::MAX {
                return Err(parse_err(1, format!("duplicate column `{name}`")));
            }
            required_idx[slot] = col;
        } else if let Some(rest) = name.strip_prefix("y.") {
            let (cause, age) = rest
                .split_once('.')
                .filter(|(c, a)| !c.is_empty() && !a.is_empty())
                .ok_or_else(|| {
                    parse_err(
                        1,
                        format!("outcome column `{name}` is not `y.<cause>.<age>`"),
                    )
                })?;
            if cause == "all" || age == "all" {
                let key = TotalKey {
                    cause: (cause != "all").then(|| cause.to_string()),
                    age: (age != "all").then(|| age.to_string()),
                };
                if total_keys.contains(&key) {
                    return Err(parse_err(1, format!("duplicate column `{name}`")));
                }
                total_keys.push(key);
                total_cols.push(col);
            } else {
                let s = Stratum::new(cause, age);
                if strata.contains(&s) {
                    return Err(parse_err(1, format!("duplicate column `{name}`")));
                }
                strata.push(s);
                stratum_cols.push(col);
            }
        } else {
            return Err(parse_err(1, format!("unknown column `{name}`")));
        }
    }
    if let Some(slot) = required_idx.iter().position(|&i| i == usize::MAX) {
        return Err(parse_err(
            1,
            format!("missing required column `{}`", REQUIRED[slot]),
        ));
    }
    if mode == OutcomeMode::Ignore {
        strata.clear();
        stratum_cols.clear();
        total_keys.clear();
        total_cols.clear();
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |slot: usize| row.get(required_idx[slot]).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d")
            .map_err(|_| parse_err(line, format!("bad date `{}`", field(0))))?;
        let exposure = parse_opt_f64(field(1), "exposure", line)?;
        let temperature = parse_opt_f64(field(2), "temperature", line)?;
        let humidity = parse_opt_f64(field(3), "humidity", line)?;
        let influenza = parse_flag(field(4), "influenza", line)?;
        let holiday = parse_flag(field(5), "holiday", line)?;
        let outcomes = stratum_cols
            .iter()
            .map(|&c| parse_opt_count(row.get(c).unwrap_or(""), &headers[c], line))
            .collect::<Result<Vec<_>>>()?;
        let totals = total_cols
            .iter()
            .map(|&c| parse_opt_count(row.get(c).unwrap_or(""), &headers[c], line))
            .collect::<Result<Vec<_>>>()?;
        records.push(RawRecord {
            line,
            date,
            exposure,
            temperature,
            humidity,
            influenza,
            holiday,
            outcomes,
            totals,
        });
    }
    Ok(RawSeries {
        strata,
        total_keys,
        records,
    })
}

/// Writes a validated series in the ingestion schema.
pub fn write_csv<W: Write>(series: &DailySeries, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
    header.extend(series.strata().iter().map(Stratum::column_name));
    wtr.write_record(&header)?;
    for r in series.records() {
        let mut row = vec![
            r.date.format("%Y-%m-%d").to_string(),
            r.exposure.to_string(),
            r.temperature.to_string(),
            r.humidity.to_string(),
            u8::from(r.influenza).to_string(),
            u8::from(r.holiday).to_string(),
        ];
        row.extend(r.outcomes.iter().map(u32::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn parse_err(row: usize, message: String) -> Error {
    Error::Parse { row, message }
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na")
}

fn parse_opt_f64(s: &str, name: &str, line: usize) -> Result<Option<f64>> {
    if is_missing(s) {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(parse_err(
            line,
            format!("{name}: not a finite number `{s}`"),
        )),
    }
}

fn parse_opt_count(s: &str, name: &str, line: usize) -> Result<Option<i64>> {
    if is_missing(s) {
        return Ok(None);
    }
    s.parse::<i64>()
        .map(Some)
        .map_err(|_| parse_err(line, format!("{name}: not an integer count `{s}`")))
}

fn parse_flag(s: &str, name: &str, line: usize) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(parse_err(
            line,
            format!("{name}: flag must be 0 or 1, got `{s}`"),
        )),
    }
}
