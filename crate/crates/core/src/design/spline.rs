//! Cubic regression spline for the calendar-time trend.
//!
//! Natural cubic spline with `df - 1` interior knots at evenly spaced quantiles
//! of the time index. The basis is built from a clamped cubic B-spline basis:
//! the first B-spline is dropped (the model intercept replaces it) and the
//! remaining coefficients are projected onto the null space of the zero
//! second-derivative conditions at both boundary knots, leaving `df` columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CubicRegressionSpline {
    /// Full clamped knot vector (boundary knots repeated four times).
    knots: Vec<f64>,
    /// Maps B-splines 1.. onto the natural-spline columns.
    transform: DMatrix<f64>,
}

impl CubicRegressionSpline {
    pub fn new(t: &[f64], df: usize) -> Result<Self> {
        if df < 3 {
            return Err(Error::Validation(format!(
                "cubic spline needs at least 3 degrees of freedom, got {df}"
            )));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "cubic spline: non-finite time index".into(),
            ));
        }
        let mut sorted = t.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if df > distinct.len() {
            return Err(Error::Validation(format!(
                "cubic spline: {df} degrees of freedom exceed {} distinct time values",
                distinct.len()
            )));
        }
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let interior: Vec<f64> = (1..df)
            .map(|j| quantile_sorted(&sorted, j as f64 / df as f64))
            .collect();
        let mut prev = lo;
        for &k in &interior {
            if k <= prev || k >= hi {
                return Err(Error::Validation(
                    "cubic spline: quantile knots are not distinct; lower the degrees of freedom"
                        .into(),
                ));
            }
            prev = k;
        }

        let mut knots = vec![lo; DEGREE + 1];
        knots.extend_from_slice(&interior);
        knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
        let n_basis = knots.len() - DEGREE - 1;

        // constraints on B-splines 1..n_basis (first one dropped)
        let m = n_basis - 1;
        let mut constraint = DMatrix::<f64>::zeros(m, 2);
        for (c, x) in [lo, hi].into_iter().enumerate() {
            let d2 = bspline_basis(&knots, DEGREE, x, 2);
            for i in 0..m {
                constraint[(i, c)] = d2[i + 1];
            }
        }
        let qr = constraint.qr();
        let mut q_full_t = DMatrix::<f64>::identity(m, m);
        qr.q_tr_mul(&mut q_full_t);
        let q_full = q_full_t.transpose();
        let transform = q_full.columns(2, m - 2).into_owned();
        debug_assert_eq!(transform.ncols(), df);

        Ok(Self { knots, transform })
    }

    pub fn df(&self) -> usize {
        self.transform.ncols()
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[DEGREE + 1..self.knots.len() - DEGREE - 1]
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Basis row at `x`; linear extrapolation outside the boundary knots.
    pub fn evaluate(&self, x: f64) -> DVector<f64> {
        let (lo, hi) = self.boundary();
        if x < lo || x > hi {
            let edge = if x < lo { lo } else { hi };
            let value = self.project(&bspline_basis(&self.knots, DEGREE, edge, 0));
            let slope = self.project(&bspline_basis(&self.knots, DEGREE, edge, 1));
            return value + slope * (x - edge);
        }
        self.project(&bspline_basis(&self.knots, DEGREE, x, 0))
    }

    /// `order`-th derivative of the basis row at `x` (inside the boundary).
    pub fn derivative(&self, x: f64, order: usize) -> DVector<f64> {
        self.project(&bspline_basis(&self.knots, DEGREE, x, order))
    }

    pub fn matrix(&self, xs: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(xs.len(), self.df());
        for (r, &x) in xs.iter().enumerate() {
            out.set_row(r, &self.evaluate(x).transpose());
        }
        out
    }

    fn project(&self, b: &[f64]) -> DVector<f64> {
        let tail = DVector::from_column_slice(&b[1..]);
        self.transform.tr_mul(&tail)
    }
}

/// Basis matrix of `df` natural cubic spline columns over `t`.
pub fn cubic_spline_basis(t: &[f64], df: usize) -> Result<DMatrix<f64>> {
    Ok(CubicRegressionSpline::new(t, df)?.matrix(t))
}

/// Degrees of freedom for a calendar spline of `df_per_year` over `n_days`.
pub fn calendar_df(df_per_year: usize, n_days: usize) -> usize {
    let years = n_days as f64 / 365.25;
    ((df_per_year as f64 * years).round() as usize).max(3)
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Values (or derivatives) of all B-splines of `degree` on `knots` at `x`.
pub(crate) fn bspline_basis(knots: &[f64], degree: usize, x: f64, order: usize) -> Vec<f64> {
    let n = knots.len() - degree - 1;
    if order > degree {
        return vec![0.0; n];
    }
    if order > 0 {
        let lower = bspline_basis(knots, degree - 1, x, order - 1);
        let p = degree as f64;
        return (0..n)
            .map(|i| {
                let left = ratio(lower[i], knots[i + degree] - knots[i]);
                let right = ratio(lower[i + 1], knots[i + degree + 1] - knots[i + 1]);
                p * (left - right)
            })
            .collect();
    }
    // degree-0 indicators, closing the last non-empty interval on the right
    let last = knots.len() - 1;
    let span = if x >= knots[last] {
        (0..last)
            .rev()
            .find(|&i| knots[i] < knots[i + 1])
            .unwrap_or(0)
    } else {
        (0..last)
            .find(|&i| knots[i] <= x && x < knots[i + 1])
            .unwrap_or(0)
    };
    let mut b: Vec<f64> = (0..last).map(|i| f64::from(u8::from(i == span))).collect();
    for p in 1..=degree {
        let mut next = vec![0.0; knots.len() - p - 1];
        for (i, slot) in next.iter_mut().enumerate() {
            let left = ratio((x - knots[i]) * b[i], knots[i + p] - knots[i]);
            let right = ratio(
                (knots[i + p + 1] - x) * b[i + 1],
                knots[i + p + 1] - knots[i + 1],
            );
            *slot = left + right;
        }
        b = next;
    }
    b
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
