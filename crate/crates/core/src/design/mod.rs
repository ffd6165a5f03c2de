//! Covariate design matrix and propensity-score model.

mod logistic;
mod spline;
mod tensor;
mod tprs;

use chrono::{Datelike, Weekday};
use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use logistic::{
    fit_logistic_irls, fit_logistic_irls_with, inverse_logit, predict_propensity, IrlsOptions,
    PropensityFit, SCORE_CLAMP,
};
pub use spline::{calendar_df, cubic_spline_basis, CubicRegressionSpline};
pub use tensor::{tensor_basis, tensor_names};
pub use tprs::{tprs_basis, ThinPlateSpline, DEFAULT_MAX_KNOTS};

use crate::error::{Error, Result};
use crate::series::{derive_indicators, lag_mean, DailySeries, IndicatorRules};

pub const INTERCEPT: &str = "(intercept)";

/// Propensity model specification. Defaults reproduce the reference analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    pub day_of_week: bool,
    /// Cross holiday with warm/cold season (otherwise one holiday column).
    pub holiday_by_season: bool,
    pub influenza: bool,
    pub heat: bool,
    pub july_august: bool,
    pub calendar_df_per_year: usize,
    /// Moving-average window for the temperature smooth (4 = lag 0-3).
    pub temperature_lag: usize,
    pub temperature_basis_dim: usize,
    pub humidity_basis_dim: usize,
    pub tprs_max_knots: usize,
    pub indicators: IndicatorRules,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            day_of_week: true,
            holiday_by_season: true,
            influenza: true,
            heat: true,
            july_august: true,
            calendar_df_per_year: 5,
            temperature_lag: 4,
            temperature_basis_dim: 5,
            humidity_basis_dim: 3,
            tprs_max_knots: DEFAULT_MAX_KNOTS,
            indicators: IndicatorRules::default(),
        }
    }
}

/// Named-column covariate matrix with exactly one intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    data: DMatrix<f64>,
    dropped: Vec<String>,
}

impl DesignMatrix {
    /// Checks finiteness, a single constant column named [`INTERCEPT`] in
    /// first position, and full column rank.
    pub fn new(names: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "design matrix has non-finite entries".into(),
            ));
        }
        if names.first().map(String::as_str) != Some(INTERCEPT)
            || data.column(0).iter().any(|&v| v != 1.0)
        {
            return Err(Error::Validation(
                "first design column must be the intercept".into(),
            ));
        }
        let constant: Vec<String> = (1..data.ncols())
            .filter(|&c| is_constant(data.column(c).iter().copied()))
            .map(|c| names[c].clone())
            .collect();
        if !constant.is_empty() {
            return Err(Error::RankDeficient { columns: constant });
        }
        let collinear = collinear_columns(&data);
        if !collinear.is_empty() {
            return Err(Error::RankDeficient {
                columns: collinear.into_iter().map(|c| names[c].clone()).collect(),
            });
        }
        Ok(Self {
            names,
            data,
            dropped: Vec::new(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, r: usize) -> DVector<f64> {
        self.data.row(r).transpose()
    }

    /// Columns removed during assembly because they were constant.
    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    /// Number of columns whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.names.iter().filter(|n| n.starts_with(prefix)).count()
    }
}

fn is_constant(mut values: impl Iterator<Item = f64>) -> bool {
    match values.next() {
        Some(first) => values.all(|v| v == first),
        None => true,
    }
}

/// Indices of columns numerically in the span of the preceding ones
/// (modified Gram-Schmidt).
fn collinear_columns(data: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for c in 0..data.ncols() {
        let original = data.column(c).into_owned();
        let norm0 = original.norm();
        let mut v = original;
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            out.push(c);
        } else {
            basis.push(v / norm);
        }
    }
    out
}

struct Builder {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    standardise: Vec<bool>,
}

impl Builder {
    fn push(&mut self, name: impl Into<String>, col: Vec<f64>, standardise: bool) {
        self.names.push(name.into());
        self.columns.push(col);
        self.standardise.push(standardise);
    }

    fn push_flag(&mut self, name: impl Into<String>, flags: impl Iterator<Item = bool>) {
        self.push(name, flags.map(|b| f64::from(u8::from(b))).collect(), false);
    }

    fn push_block(&mut self, names: Vec<String>, block: &DMatrix<f64>) {
        for (name, col) in names.into_iter().zip(block.column_iter()) {
            self.push(name, col.iter().copied().collect(), true);
        }
    }
}

const WEEKDAYS: [Weekday; 6] = [
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

/// Builds the propensity design: intercept, season-specific day-of-week and
/// holiday indicators, influenza, heat and July–August flags, the calendar
/// cubic spline, and the temperature × humidity tensor smooth.
///
/// Constant indicator columns (e.g. no heat days in the data) are dropped and
/// listed in [`DesignMatrix::dropped`]. Smooth columns are centred and scaled
/// to unit standard deviation.
pub fn assemble_design(series: &DailySeries, spec: &DesignSpec) -> Result<DesignMatrix> {
    let n = series.len();
    if n == 0 {
        return Err(Error::Validation("empty series".into()));
    }
    let flags = derive_indicators(series, &spec.indicators);
    let records = series.records();
    let mut b = Builder {
        names: Vec::new(),
        columns: Vec::new(),
        standardise: Vec::new(),
    };
    b.push(INTERCEPT, vec![1.0; n], false);

    let seasons = [("warm", true), ("cold", false)];
    if spec.day_of_week {
        for (season, warm) in seasons {
            for wd in WEEKDAYS {
                b.push_flag(
                    format!("dow:{wd}:{season}"),
                    records
                        .iter()
                        .zip(&flags)
                        .map(|(r, f)| r.date.weekday() == wd && f.warm_season == warm),
                );
            }
        }
    }
    if spec.holiday_by_season {
        for (season, warm) in seasons {
            b.push_flag(
                format!("holiday:{season}"),
                records
                    .iter()
                    .zip(&flags)
                    .map(|(r, f)| r.holiday && f.warm_season == warm),
            );
        }
    } else {
        b.push_flag("holiday", records.iter().map(|r| r.holiday));
    }
    if spec.influenza {
        b.push_flag("influenza", records.iter().map(|r| r.influenza));
    }
    if spec.heat {
        b.push_flag("heat", flags.iter().map(|f| f.heat));
    }
    if spec.july_august {
        b.push_flag("july_august", flags.iter().map(|f| f.july_august));
    }

    if spec.calendar_df_per_year > 0 {
        let df = calendar_df(spec.calendar_df_per_year, n);
        let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let cal = cubic_spline_basis(&t, df)?;
        b.push_block((1..=df).map(|j| format!("cal{j}")).collect(), &cal);
    }

    if spec.temperature_basis_dim > 0 && spec.humidity_basis_dim > 0 {
        let temp = lag_mean(&series.temperature(), spec.temperature_lag)?;
        let hum = series.humidity();
        let temp_basis =
            ThinPlateSpline::new(&temp, spec.temperature_basis_dim, spec.tprs_max_knots)?
                .matrix_with_constant(&temp);
        let hum_basis = ThinPlateSpline::new(&hum, spec.humidity_basis_dim, spec.tprs_max_knots)?
            .matrix_with_constant(&hum);
        let te = tensor_basis(&temp_basis, &hum_basis)?;
        let names = tensor_names(
            &marginal_names("temp", spec.temperature_basis_dim),
            &marginal_names("hum", spec.humidity_basis_dim),
        );
        // column 0 is const*const, absorbed by the intercept
        let te = te.remove_column(0);
        let names = names[1..].iter().map(|s| format!("te:{s}")).collect();
        b.push_block(names, &te);
    }

    let mut names = Vec::new();
    let mut cols = Vec::new();
    let mut dropped = Vec::new();
    for (i, ((name, mut col), standardise)) in b
        .names
        .into_iter()
        .zip(b.columns)
        .zip(b.standardise)
        .enumerate()
    {
        if i > 0 && is_constant(col.iter().copied()) {
            warn!("design column `{name}` is constant and was dropped");
            dropped.push(name);
            continue;
        }
        if standardise {
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            for v in &mut col {
                *v = (*v - mean) / sd;
            }
        }
        names.push(name);
        cols.push(col);
    }
    let data = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
    let mut design = DesignMatrix::new(names, data)?;
    design.dropped = dropped;
    Ok(design)
}

fn marginal_names(prefix: &str, k: usize) -> Vec<String> {
    let mut v = vec![format!("{prefix}0")];
    v.extend((1..k - 1).map(|j| format!("{prefix}s{j}")));
    v.push(format!("{prefix}lin"));
    v
}
