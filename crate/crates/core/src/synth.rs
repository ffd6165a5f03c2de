//! Synthetic daily series with known potential outcomes.
//!
//! Weather follows an annual cycle plus AR(1) noise; exposure is log-normal
//! around a baseline, shifted towards cold days by `confounding`. Untreated
//! counts are Poisson with a log-linear seasonal, heat and influenza mean, and
//! treated counts add independent Poisson(τ) draws, so the true total effect on
//! the treated is an exact integer. Replicate `r` of a batch uses seed
//! `seed + r`.

use std::collections::HashSet;
use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{assign_treatment, lag_mean, DailyRecord, DailySeries, Stratum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthStratum {
    pub cause: String,
    pub age: String,
    /// Mean daily count at the annual average.
    pub base_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_days: usize,
    pub start: NaiveDate,
    /// Amplitude of the annual cycle on the log-mean of counts.
    pub seasonal_amplitude: f64,
    /// 0 makes exposure independent of weather and season.
    pub confounding: f64,
    /// Expected extra events per treated day, summed over strata.
    pub tau: f64,
    pub threshold: f64,
    pub exposure_lag: usize,
    /// Median exposure (µg/m³) when `confounding` is 0.
    pub exposure_median: f64,
    /// Log-scale SD of the weather-independent exposure noise.
    pub exposure_noise_sd: f64,
    /// Log-mean increase per °C above `heat_onset`.
    pub heat_effect: f64,
    pub heat_onset: f64,
    pub influenza_effect: f64,
    pub strata: Vec<SynthStratum>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let rates = [
            ("cardiovascular", [1.0, 1.5, 6.5]),
            ("respiratory", [0.3, 0.5, 2.2]),
            ("other", [4.0, 3.0, 11.0]),
        ];
        let ages = ["0-64", "65-74", "75+"];
        let strata = rates
            .iter()
            .flat_map(|(cause, r)| {
                ages.iter()
                    .zip(r)
                    .map(move |(age, &base_rate)| SynthStratum {
                        cause: cause.to_string(),
                        age: age.to_string(),
                        base_rate,
                    })
            })
            .collect();
        Self {
            n_days: 1461,
            start: NaiveDate::from_ymd_opt(2003, 1, 1).unwrap(),
            seasonal_amplitude: 0.15,
            confounding: 1.0,
            tau: 1.0,
            threshold: 40.0,
            exposure_lag: 2,
            exposure_median: 42.0,
            exposure_noise_sd: 0.45,
            heat_effect: 0.03,
            heat_onset: 24.0,
            influenza_effect: 0.10,
            strata,
        }
    }
}

impl SynthSpec {
    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_days < 2 {
            return bad(format!("n_days must be at least 2, got {}", self.n_days));
        }
        if self.strata.is_empty() {
            return bad("at least one stratum is required".into());
        }
        let mut seen = HashSet::new();
        for s in &self.strata {
            if !(s.base_rate.is_finite() && s.base_rate > 0.0) {
                return bad(format!(
                    "base_rate of {}/{} must be positive",
                    s.cause, s.age
                ));
            }
            if !seen.insert((s.cause.as_str(), s.age.as_str())) {
                return bad(format!("duplicate stratum {}/{}", s.cause, s.age));
            }
            if s.cause == "all" || s.age == "all" || s.cause.is_empty() || s.age.is_empty() {
                return bad(format!("invalid stratum label {}/{}", s.cause, s.age));
            }
        }
        let nonneg = [
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("confounding", self.confounding),
            ("tau", self.tau),
            ("exposure_noise_sd", self.exposure_noise_sd),
            ("heat_effect", self.heat_effect),
            ("influenza_effect", self.influenza_effect),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.exposure_median.is_finite() && self.exposure_median > 0.0) {
            return bad("exposure_median must be positive".into());
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return bad("threshold must be positive".into());
        }
        if self.exposure_lag == 0 {
            return bad("exposure_lag must be at least 1".into());
        }
        if !self.heat_onset.is_finite() {
            return bad("heat_onset must be finite".into());
        }
        Ok(())
    }
}

/// Ground truth for a generated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub spec: SynthSpec,
    pub seed: u64,
    /// Per day, per stratum.
    pub y0: Vec<Vec<u32>>,
    pub y1: Vec<Vec<u32>>,
    /// Treatment implied by the spec's threshold and lag.
    pub w: Vec<bool>,
    /// Expected effect per treated day, per stratum.
    pub tau: Vec<f64>,
    /// Annual cycle `cos(2π(doy − 15)/365.25)`, high in mid-January.
    pub season: Vec<f64>,
    /// Expected untreated count per day, summed over strata.
    pub mean_y0: Vec<f64>,
}

const ANNUAL_PHASE_DAY: f64 = 15.0;
/// Log-exposure shift per SD of temperature at `confounding = 1`.
const WEATHER_LOADING: f64 = 0.3;
const HOLIDAYS: [(u32, u32); 10] = [
    (1, 1),
    (1, 6),
    (4, 25),
    (5, 1),
    (6, 2),
    (8, 15),
    (11, 1),
    (12, 8),
    (12, 25),
    (12, 26),
];

fn annual_cycle(date: NaiveDate) -> f64 {
    (2.0 * PI * (date.ordinal() as f64 - ANNUAL_PHASE_DAY) / 365.25).cos()
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite sd")
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
    draw.min(u32::MAX as f64) as u32
}

/// Influenza epidemics: six weeks starting between 20 Dec and 19 Jan.
fn influenza_days(dates: &[NaiveDate], rng: &mut ChaCha8Rng) -> Vec<bool> {
    let first = dates[0].year() - 1;
    let last = dates[dates.len() - 1].year();
    let windows: Vec<(NaiveDate, NaiveDate)> = (first..=last)
        .map(|y| {
            let start = NaiveDate::from_ymd_opt(y, 12, 20).unwrap()
                + Duration::days(rng.random_range(0..31));
            (start, start + Duration::days(42))
        })
        .collect();
    dates
        .iter()
        .map(|d| windows.iter().any(|(a, b)| a <= d && d < b))
        .collect()
}

pub fn generate(spec: &SynthSpec, seed: u64) -> Result<(DailySeries, Oracle)> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n_days;
    let dates: Vec<NaiveDate> = (0..n)
        .map(|i| spec.start + Duration::days(i as i64))
        .collect();
    let season: Vec<f64> = dates.iter().map(|&d| annual_cycle(d)).collect();

    let temp_noise = normal(2.5);
    let hum_noise = normal(8.0);
    let mut t_ar = 0.0;
    let mut temperature = Vec::with_capacity(n);
    let mut humidity = Vec::with_capacity(n);
    for &c in &season {
        t_ar = 0.7 * t_ar + temp_noise.sample(&mut rng);
        let t = 13.5 - 10.5 * c + t_ar;
        let h = 70.0 + 10.0 * c - 0.8 * t_ar + hum_noise.sample(&mut rng);
        temperature.push((t * 10.0).round() / 10.0);
        humidity.push(h.clamp(10.0, 100.0).round());
    }
    let influenza = influenza_days(&dates, &mut rng);

    // Log-exposure: baseline + confounded weather term + independent AR(1).
    // At confounding 1 the cold-to-warm season contrast is about a factor 2.
    let phi: f64 = 0.7;
    let innov = normal(spec.exposure_noise_sd * (1.0 - phi * phi).sqrt());
    let mut x_ar = normal(spec.exposure_noise_sd).sample(&mut rng);
    let mut exposure = Vec::with_capacity(n);
    for &t in &temperature {
        let weather = -(t - 13.5) / 7.8;
        let log_x = spec.exposure_median.ln() + spec.confounding * WEATHER_LOADING * weather + x_ar;
        exposure.push((log_x.exp() * 10.0).round() / 10.0);
        x_ar = phi * x_ar + innov.sample(&mut rng);
    }
    let x_lagged = lag_mean(&exposure, spec.exposure_lag)?;
    let w = assign_treatment(&x_lagged, spec.threshold, spec.exposure_lag)?.w;

    let total_rate: f64 = spec.strata.iter().map(|s| s.base_rate).sum();
    let tau: Vec<f64> = spec
        .strata
        .iter()
        .map(|s| spec.tau * s.base_rate / total_rate)
        .collect();

    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    let mut mean_y0 = Vec::with_capacity(n);
    for i in 0..n {
        let log_mult = spec.seasonal_amplitude * season[i]
            + spec.heat_effect * (temperature[i] - spec.heat_onset).max(0.0)
            + if influenza[i] {
                spec.influenza_effect
            } else {
                0.0
            };
        let mult = log_mult.exp();
        mean_y0.push(total_rate * mult);
        let day0: Vec<u32> = spec
            .strata
            .iter()
            .map(|s| poisson(&mut rng, s.base_rate * mult))
            .collect();
        let day1: Vec<u32> = day0
            .iter()
            .zip(&tau)
            .map(|(&y, &t)| y + poisson(&mut rng, t))
            .collect();
        y0.push(day0);
        y1.push(day1);
    }

    let records = (0..n)
        .map(|i| DailyRecord {
            date: dates[i],
            exposure: exposure[i],
            temperature: temperature[i],
            humidity: humidity[i],
            influenza: influenza[i],
            holiday: HOLIDAYS.contains(&(dates[i].month(), dates[i].day())),
            outcomes: if w[i] { y1[i].clone() } else { y0[i].clone() },
        })
        .collect();
    let strata = spec
        .strata
        .iter()
        .map(|s| Stratum::new(s.cause.clone(), s.age.clone()))
        .collect();
    let oracle = Oracle {
        spec: spec.clone(),
        seed,
        y0,
        y1,
        w,
        tau,
        season,
        mean_y0,
    };
    Ok((DailySeries::from_parts(strata, records), oracle))
}

/// `Σ_i W_i (Y_i(1) − Y_i(0))` summed over strata.
pub fn true_satt(oracle: &Oracle, w: &[bool]) -> Result<i64> {
    if w.len() != oracle.y0.len() {
        return Err(Error::Dimension(format!(
            "{} treatment flags for {} oracle days",
            w.len(),
            oracle.y0.len()
        )));
    }
    Ok(w.iter()
        .zip(oracle.y0.iter().zip(&oracle.y1))
        .filter(|(&t, _)| t)
        .map(|(_, (a, b))| {
            b.iter()
                .zip(a)
                .map(|(&y1, &y0)| y1 as i64 - y0 as i64)
                .sum::<i64>()
        })
        .sum())
}
