//! Attributable-events estimation by propensity-score matching on daily series.
//!
//! The pipeline has a design phase that never reads outcomes
//! ([`series`] → [`design`] → [`matching`] → [`balance`]) and an analysis
//! phase ([`impact`]) that imputes each high-exposure day's missing
//! low-exposure outcome from its matched control day. [`synth`] generates
//! series with known potential outcomes for validation, and [`pipeline`]
//! drives the stages and writes reports.

pub mod balance;
pub mod design;
pub mod error;
pub mod impact;
pub mod matching;
pub mod pipeline;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
