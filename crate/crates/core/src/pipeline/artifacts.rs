//! Fixed-name files in the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::Datelike;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::balance::BalanceRow;
use crate::error::{Error, Result};
use crate::impact::ImpactTable;
use crate::matching::match_multiplicity;
use crate::series::{write_csv, DailySeries};
use crate::synth::Oracle;

use super::report;
use super::{DesignOutput, ImpactOutput, MatchOutput, StoredMatch};

pub mod file_names {
    pub const INGEST_SUMMARY: &str = "ingest_summary.txt";
    pub const DESIGN: &str = "design.json";
    pub const FIT_SUMMARY: &str = "propensity_fit.txt";
    pub const MATCHMAP: &str = "matchmap.json";
    pub const MATCH_AUDIT: &str = "match_pairs.csv";
    pub const OVERLAP: &str = "overlap.txt";
    pub const PLOT_MULTIPLICITY: &str = "plot_multiplicity.csv";
    pub const PLOT_PROPENSITY: &str = "plot_propensity_density.csv";
    pub const BALANCE_TXT: &str = "balance.txt";
    pub const BALANCE_CSV: &str = "balance.csv";
    pub const PLOT_MONTHS: &str = "plot_month_distribution.csv";
    pub const IMPACT_TXT: &str = "impact.txt";
    pub const IMPACT_CSV: &str = "impact.csv";
    pub const SENSITIVITY_TXT: &str = "sensitivity.txt";
    pub const SENSITIVITY_CSV: &str = "sensitivity.csv";
    pub const PLOT_DAILY: &str = "plot_daily_series.csv";
    pub const SYNTH_SERIES: &str = "synth.csv";
    pub const SYNTH_ORACLE: &str = "synth_oracle.json";
}

use file_names as f;

const DENSITY_BINS: usize = 20;

#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    dir: PathBuf,
}

impl ArtifactPaths {
    /// Creates the directory if needed.
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn ingest_summary(&self) -> PathBuf {
        self.file(f::INGEST_SUMMARY)
    }

    pub fn synth_series(&self) -> PathBuf {
        self.file(f::SYNTH_SERIES)
    }
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: PathBuf, stage: &'static str) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact { path, stage });
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_rows(
    path: PathBuf,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip form; exponent notation for very small or large values.
fn num(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

pub(super) fn write_ingest(p: &ArtifactPaths, series: &DailySeries) -> Result<()> {
    fs::write(p.ingest_summary(), report::ingest_summary(series))?;
    Ok(())
}

pub(super) fn write_design(p: &ArtifactPaths, d: &DesignOutput) -> Result<()> {
    write_json(p.file(f::DESIGN), d)?;
    fs::write(p.file(f::FIT_SUMMARY), report::fit_summary(d))?;
    Ok(())
}

pub(super) fn read_design(p: &ArtifactPaths, stage: &'static str) -> Result<DesignOutput> {
    read_json(p.file(f::DESIGN), stage)
}

pub(super) fn read_match(p: &ArtifactPaths, stage: &'static str) -> Result<MatchOutput> {
    read_json::<StoredMatch>(p.file(f::MATCHMAP), stage)?.try_into()
}

fn histogram(values: impl Iterator<Item = f64>) -> [usize; DENSITY_BINS] {
    let mut h = [0; DENSITY_BINS];
    for v in values {
        let b = ((v * DENSITY_BINS as f64).floor() as usize).min(DENSITY_BINS - 1);
        h[b] += 1;
    }
    h
}

pub(super) fn write_match(p: &ArtifactPaths, d: &DesignOutput, m: &MatchOutput) -> Result<()> {
    write_json(p.file(f::MATCHMAP), &StoredMatch::from(m))?;
    let dates = &d.dates;
    write_rows(
        p.file(f::MATCH_AUDIT),
        &["treated_date", "control_date", "distance"],
        m.map.pairs().iter().map(|pr| {
            vec![
                dates[pr.treated].to_string(),
                dates[pr.control].to_string(),
                num(pr.distance),
            ]
        }),
    )?;
    fs::write(p.file(f::OVERLAP), report::overlap_text(m, dates))?;
    write_rows(
        p.file(f::PLOT_MULTIPLICITY),
        &["times_used", "control_days"],
        match_multiplicity(&m.map)
            .into_iter()
            .map(|(k, n)| vec![k.to_string(), n.to_string()]),
    )?;

    // always on the probability scale, whatever the matching scale
    let e = &d.fit.e_hat;
    let w = m.map.w();
    let treated = histogram((0..e.len()).filter(|&i| w[i]).map(|i| e[i]));
    let control = histogram((0..e.len()).filter(|&i| !w[i]).map(|i| e[i]));
    let matched = histogram(m.map.pairs().iter().map(|pr| e[pr.control]));
    write_rows(
        p.file(f::PLOT_PROPENSITY),
        &[
            "bin_low",
            "bin_high",
            "treated",
            "control_pre",
            "control_matched",
        ],
        (0..DENSITY_BINS).map(|b| {
            vec![
                (b as f64 / DENSITY_BINS as f64).to_string(),
                ((b + 1) as f64 / DENSITY_BINS as f64).to_string(),
                treated[b].to_string(),
                control[b].to_string(),
                matched[b].to_string(),
            ]
        }),
    )
}

pub(super) fn write_balance(
    p: &ArtifactPaths,
    series: &DailySeries,
    m: &MatchOutput,
    rows: &[BalanceRow],
) -> Result<()> {
    fs::write(p.file(f::BALANCE_TXT), report::balance_text(rows))?;
    write_rows(
        p.file(f::BALANCE_CSV),
        &[
            "covariate",
            "kind",
            "treated",
            "control",
            "matched",
            "p_pre",
            "p_post",
            "delta_pre",
            "delta_post",
            "pct_bias",
        ],
        rows.iter().map(|r| {
            vec![
                r.name.clone(),
                format!("{:?}", r.kind).to_lowercase(),
                opt(r.treated),
                opt(r.control),
                opt(r.matched),
                num(r.p_pre),
                num(r.p_post),
                opt(r.delta_pre),
                opt(r.delta_post),
                opt(r.pct_bias),
            ]
        }),
    )?;
    let months: Vec<usize> = series
        .records()
        .iter()
        .map(|r| r.date.month0() as usize)
        .collect();
    let w = m.map.w();
    let mut counts = [[0usize; 3]; 12];
    for (i, &mo) in months.iter().enumerate() {
        counts[mo][if w[i] { 0 } else { 1 }] += 1;
    }
    for pr in m.map.pairs() {
        counts[months[pr.control]][2] += 1;
    }
    write_rows(
        p.file(f::PLOT_MONTHS),
        &["month", "treated", "control_pre", "control_matched"],
        counts.iter().enumerate().map(|(mo, c)| {
            vec![
                (mo + 1).to_string(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
            ]
        }),
    )
}

fn write_impact_csv(path: PathBuf, t: &ImpactTable) -> Result<()> {
    write_rows(
        path,
        &[
            "cause",
            "age",
            "ad",
            "variance",
            "ci_low",
            "ci_high",
            "level",
            "treated_days_used",
        ],
        t.estimates.iter().map(|e| {
            vec![
                e.cause.clone().unwrap_or_else(|| "all".into()),
                e.age.clone().unwrap_or_else(|| "all".into()),
                e.ad.to_string(),
                num(e.s2),
                num(e.ci_low),
                num(e.ci_high),
                num(t.level),
                e.n_treated_used.to_string(),
            ]
        }),
    )
}

pub(super) fn write_impact(
    p: &ArtifactPaths,
    series: &DailySeries,
    d: &DesignOutput,
    out: &ImpactOutput,
) -> Result<()> {
    fs::write(
        p.file(f::IMPACT_TXT),
        report::impact_text(&out.main, "Attributable events by cause and age"),
    )?;
    write_impact_csv(p.file(f::IMPACT_CSV), &out.main)?;
    if let Some((flag, t)) = &out.sensitivity {
        let title = format!(
            "Attributable events by cause and age, excluding {}",
            flag.label()
        );
        fs::write(p.file(f::SENSITIVITY_TXT), report::impact_text(t, &title))?;
        write_impact_csv(p.file(f::SENSITIVITY_CSV), t)?;
    }
    let mut day_ad: Vec<Option<i64>> = vec![None; series.len()];
    for di in &out.daily {
        day_ad[di.day] = Some(di.ad);
    }
    write_rows(
        p.file(f::PLOT_DAILY),
        &["date", "exposure_lagged", "treated", "outcome", "ad"],
        (0..series.len()).map(|i| {
            vec![
                d.dates[i].to_string(),
                num(d.treatment.x_lagged[i]),
                u8::from(d.treatment.w[i]).to_string(),
                out.daily_outcome[i].to_string(),
                day_ad[i].map_or_else(String::new, |a| a.to_string()),
            ]
        }),
    )
}

pub(super) fn write_synth(p: &ArtifactPaths, series: &DailySeries, oracle: &Oracle) -> Result<()> {
    write_csv(series, fs::File::create(p.synth_series())?)?;
    write_json(p.file(f::SYNTH_ORACLE), oracle)
}
