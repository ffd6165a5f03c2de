//! Stage driver: configuration, in-memory stages and on-disk artifacts.
//!
//! The design stages (`design`, `match`, `balance`) load the input with
//! outcome columns ignored; only [`impact`] reads them. Each stage writes
//! fixed-name files into the output directory and the next stage reads them
//! back, so running stages one at a time gives the same artifacts as
//! [`run_all`].

mod artifacts;
mod report;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::info;
use serde::{Deserialize, Serialize};

use crate::balance::{balance_table, standard_covariates, BalanceRow};
use crate::design::{
    assemble_design, fit_logistic_irls_with, DesignSpec, IrlsOptions, PropensityFit,
};
use crate::error::{Error, Result};
use crate::impact::{
    impute_and_diff, sensitivity_exclude, stratified_impact, DayImpact, ExclusionMode,
    ImpactOptions, ImpactTable,
};
use crate::matching::{nn_match, overlap_check, MatchMap, MatchPair, MatchScale, OverlapReport};
use crate::series::{
    assign_treatment, derive_indicators, lag_mean, read_csv, validate, DailySeries, GapPolicy,
    OutcomeMode, TreatmentAssignment,
};
use crate::synth::SynthSpec;

pub use artifacts::{file_names, ArtifactPaths};

/// Day flag whose days are left out of the sensitivity table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityFlag {
    None,
    #[default]
    Influenza,
    Holiday,
    Heat,
    JulyAugust,
    WarmSeason,
    Weekend,
}

impl SensitivityFlag {
    pub fn label(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Influenza => "influenza epidemic days",
            Self::Holiday => "holidays",
            Self::Heat => "heat episodes",
            Self::JulyAugust => "July and August",
            Self::WarmSeason => "warm-season days",
            Self::Weekend => "weekends",
        }
    }

    fn values(self, series: &DailySeries, design: &DesignSpec) -> Option<Vec<bool>> {
        let flags = derive_indicators(series, &design.indicators);
        Some(match self {
            Self::None => return None,
            Self::Influenza => series.influenza(),
            Self::Holiday => series.holiday(),
            Self::Heat => flags.iter().map(|f| f.heat).collect(),
            Self::JulyAugust => flags.iter().map(|f| f.july_august).collect(),
            Self::WarmSeason => flags.iter().map(|f| f.warm_season).collect(),
            Self::Weekend => flags.iter().map(|f| f.weekend).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Treated when the lagged exposure is at or above this (µg/m³).
    pub threshold: f64,
    /// Exposure moving-average window (2 = lag 0-1).
    pub exposure_lag: usize,
    pub ci_level: f64,
    pub sensitivity: SensitivityFlag,
    pub exclusion: ExclusionMode,
    pub match_scale: MatchScale,
    /// Overlap-report distance flag; never drops days.
    pub caliper: f64,
    pub variance_neighbors: usize,
    pub gaps: GapPolicy,
    pub seed: u64,
    pub design: DesignSpec,
    pub irls: IrlsOptions,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output_dir: PathBuf::from("output"),
            threshold: 40.0,
            exposure_lag: 2,
            ci_level: 0.90,
            sensitivity: SensitivityFlag::default(),
            exclusion: ExclusionMode::default(),
            match_scale: MatchScale::default(),
            caliper: 0.1,
            variance_neighbors: 1,
            gaps: GapPolicy::default(),
            seed: 0,
            design: DesignSpec::default(),
            irls: IrlsOptions::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Config("no input file configured".into()))
    }

    pub fn impact_options(&self) -> ImpactOptions {
        ImpactOptions {
            level: self.ci_level,
            variance_neighbors: self.variance_neighbors,
        }
    }
}

pub fn load_series(path: &Path, mode: OutcomeMode, gaps: GapPolicy) -> Result<DailySeries> {
    validate(&read_csv(path, mode)?, gaps)
}

/// Everything the design phase decides: treatment, covariate matrix columns
/// and the propensity fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutput {
    pub dates: Vec<NaiveDate>,
    pub treatment: TreatmentAssignment,
    pub dropped_columns: Vec<String>,
    pub fit: PropensityFit,
}

pub fn design(series: &DailySeries, cfg: &RunConfig) -> Result<DesignOutput> {
    let x_lagged = lag_mean(&series.exposure(), cfg.exposure_lag)?;
    let treatment = assign_treatment(&x_lagged, cfg.threshold, cfg.exposure_lag)?;
    if treatment.n_treated() == 0 {
        return Err(Error::NoTreatedDays);
    }
    if treatment.n_controls() == 0 {
        return Err(Error::NoControlDays);
    }
    let z = assemble_design(series, &cfg.design)?;
    let fit = fit_logistic_irls_with(&treatment.w, &z, &cfg.irls)?;
    info!(
        "propensity model: {} columns, deviance {:.3}, {} iterations",
        fit.columns.len(),
        fit.deviance,
        fit.n_iter
    );
    Ok(DesignOutput {
        dates: series.dates(),
        treatment,
        dropped_columns: z.dropped().to_vec(),
        fit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutput {
    pub scale: MatchScale,
    /// Scores on the matching scale.
    pub scores: Vec<f64>,
    pub map: MatchMap,
    pub overlap: OverlapReport,
}

pub fn match_days(d: &DesignOutput, cfg: &RunConfig) -> Result<MatchOutput> {
    let scores = match cfg.match_scale {
        MatchScale::Probability => d.fit.e_hat.clone(),
        MatchScale::LinearPredictor => d.fit.linear_predictor.clone(),
    };
    let map = nn_match(&scores, &d.treatment.w)?;
    let overlap = overlap_check(&scores, &d.treatment.w, cfg.caliper)?;
    Ok(MatchOutput {
        scale: cfg.match_scale,
        scores,
        map,
        overlap,
    })
}

pub fn balance(
    series: &DailySeries,
    d: &DesignOutput,
    m: &MatchOutput,
    cfg: &RunConfig,
) -> Result<Vec<BalanceRow>> {
    let covs = standard_covariates(series, &cfg.design.indicators, cfg.design.temperature_lag)?;
    balance_table(&d.fit.e_hat, &covs, &m.map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactOutput {
    pub main: ImpactTable,
    pub sensitivity: Option<(SensitivityFlag, ImpactTable)>,
    /// Day-level impacts for the all-strata total.
    pub daily: Vec<DayImpact>,
    pub daily_outcome: Vec<u64>,
}

/// The analysis phase: the only consumer of outcome columns.
pub fn impact(
    series: &DailySeries,
    d: &DesignOutput,
    map: &MatchMap,
    cfg: &RunConfig,
) -> Result<ImpactOutput> {
    check_alignment(series, d)?;
    let opts = cfg.impact_options();
    let main = stratified_impact(series, map, &d.fit.e_hat, &opts)?;
    let sensitivity = match cfg.sensitivity.values(series, &cfg.design) {
        Some(flag) => Some((
            cfg.sensitivity,
            sensitivity_exclude(series, map, &d.fit.e_hat, &flag, cfg.exclusion, &opts)?,
        )),
        None => None,
    };
    let all: Vec<usize> = (0..series.strata().len()).collect();
    let daily_outcome = series.outcome_sum(&all);
    let daily = impute_and_diff(&daily_outcome, map)?;
    Ok(ImpactOutput {
        main,
        sensitivity,
        daily,
        daily_outcome,
    })
}

fn check_alignment(series: &DailySeries, d: &DesignOutput) -> Result<()> {
    if series.dates() != d.dates {
        return Err(Error::Validation(
            "input dates differ from those of the design artifact; rerun the design stage".into(),
        ));
    }
    Ok(())
}

/// Match artifact as stored on disk; reloading re-checks every invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredMatch {
    scale: MatchScale,
    scores: Vec<f64>,
    w: Vec<bool>,
    pairs: Vec<MatchPair>,
    overlap: OverlapReport,
}

impl From<&MatchOutput> for StoredMatch {
    fn from(m: &MatchOutput) -> Self {
        Self {
            scale: m.scale,
            scores: m.scores.clone(),
            w: m.map.w().to_vec(),
            pairs: m.map.pairs().to_vec(),
            overlap: m.overlap.clone(),
        }
    }
}

impl TryFrom<StoredMatch> for MatchOutput {
    type Error = Error;

    fn try_from(s: StoredMatch) -> Result<Self> {
        Ok(Self {
            scale: s.scale,
            scores: s.scores,
            map: MatchMap::from_pairs(s.w, s.pairs)?,
            overlap: s.overlap,
        })
    }
}

/// Reads the input without outcomes and checks it parses and validates.
pub fn run_ingest_check(cfg: &RunConfig) -> Result<PathBuf> {
    let series = load_series(cfg.input_path()?, OutcomeMode::Read, cfg.gaps)?;
    let paths = ArtifactPaths::new(&cfg.output_dir)?;
    artifacts::write_ingest(&paths, &series)?;
    Ok(paths.ingest_summary())
}

pub fn run_design(cfg: &RunConfig) -> Result<DesignOutput> {
    let series = load_series(cfg.input_path()?, OutcomeMode::Ignore, cfg.gaps)?;
    let d = design(&series, cfg)?;
    artifacts::write_design(&ArtifactPaths::new(&cfg.output_dir)?, &d)?;
    Ok(d)
}

pub fn run_match(cfg: &RunConfig) -> Result<MatchOutput> {
    let paths = ArtifactPaths::new(&cfg.output_dir)?;
    let d = artifacts::read_design(&paths, "match")?;
    let m = match_days(&d, cfg)?;
    artifacts::write_match(&paths, &d, &m)?;
    Ok(m)
}

pub fn run_balance(cfg: &RunConfig) -> Result<Vec<BalanceRow>> {
    let paths = ArtifactPaths::new(&cfg.output_dir)?;
    let m = artifacts::read_match(&paths, "balance")?;
    let d = artifacts::read_design(&paths, "balance")?;
    let series = load_series(cfg.input_path()?, OutcomeMode::Ignore, cfg.gaps)?;
    check_alignment(&series, &d)?;
    let rows = balance(&series, &d, &m, cfg)?;
    artifacts::write_balance(&paths, &series, &m, &rows)?;
    Ok(rows)
}

pub fn run_impact(cfg: &RunConfig) -> Result<ImpactOutput> {
    let paths = ArtifactPaths::new(&cfg.output_dir)?;
    let m = artifacts::read_match(&paths, "impact")?;
    let d = artifacts::read_design(&paths, "impact")?;
    let series = load_series(cfg.input_path()?, OutcomeMode::Read, cfg.gaps)?;
    let out = impact(&series, &d, &m.map, cfg)?;
    artifacts::write_impact(&paths, &series, &d, &out)?;
    Ok(out)
}

/// Chains every stage; all design artifacts are on disk before the input is
/// re-read with outcomes.
pub fn run_all(cfg: &RunConfig) -> Result<ImpactOutput> {
    run_ingest_check(cfg)?;
    run_design(cfg)?;
    run_match(cfg)?;
    run_balance(cfg)?;
    run_impact(cfg)
}

/// Writes a synthetic series in the ingestion schema plus its oracle.
pub fn run_synth(spec: &SynthSpec, seed: u64, output_dir: &Path) -> Result<PathBuf> {
    let (series, oracle) = crate::synth::generate(spec, seed)?;
    let paths = ArtifactPaths::new(output_dir)?;
    artifacts::write_synth(&paths, &series, &oracle)?;
    Ok(paths.synth_series())
}
