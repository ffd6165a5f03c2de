//! Low-rank thin plate regression spline for one covariate.
//!
//! Radial kernel `|x - x'|^3` (second-order penalty in one dimension) on the
//! distinct observed values. The kernel matrix is eigendecomposed, the `k`
//! eigenvectors with the largest absolute eigenvalues are kept, and the
//! polynomial side condition `Tᵀδ = 0` with `T = [1, x]` is imposed, which
//! leaves `k - 2` wiggly columns. Together with the null-space functions
//! `{1, x}` the basis has dimension `k`; [`ThinPlateSpline::matrix`] drops the
//! constant and returns `k - 1` columns ordered `[wiggly..., x]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Cap on kernel knots; larger sets of distinct values are thinned evenly.
pub const DEFAULT_MAX_KNOTS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct ThinPlateSpline {
    k: usize,
    center: f64,
    scale: f64,
    /// Standardised knot locations.
    knots: Vec<f64>,
    /// Kernel coefficients of the wiggly columns, `n_knots × (k - 2)`.
    coef: DMatrix<f64>,
}

impl ThinPlateSpline {
    pub fn new(x: &[f64], k: usize, max_knots: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::Validation(format!(
                "thin plate basis dimension must be at least 3, got {k}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "thin plate basis: non-finite covariate".into(),
            ));
        }
        let mut distinct = x.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < k {
            return Err(Error::Validation(format!(
                "thin plate basis of dimension {k} needs {k} distinct values, found {}",
                distinct.len()
            )));
        }
        let max_knots = max_knots.max(k);
        if distinct.len() > max_knots {
            let last = distinct.len() - 1;
            distinct = (0..max_knots)
                .map(|j| distinct[(j * last + (max_knots - 1) / 2) / (max_knots - 1)])
                .collect();
            distinct.dedup();
        }

        let n = x.len() as f64;
        let center = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|v| (v - center).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        let knots: Vec<f64> = distinct.iter().map(|v| (v - center) / scale).collect();
        let m = knots.len();

        let kernel = DMatrix::from_fn(m, m, |i, j| radial(knots[i] - knots[j]));
        let eig = SymmetricEigen::new(kernel);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .abs()
                .total_cmp(&eig.eigenvalues[a].abs())
                .then(a.cmp(&b))
        });
        let lead = DMatrix::from_fn(m, k, |r, c| eig.eigenvectors[(r, order[c])]);

        // side condition: (U_kᵀ T)ᵀ z = 0
        let poly = DMatrix::from_fn(m, 2, |r, c| if c == 0 { 1.0 } else { knots[r] });
        let ut = lead.tr_mul(&poly);
        let qr = ut.qr();
        let mut q_t = DMatrix::<f64>::identity(k, k);
        qr.q_tr_mul(&mut q_t);
        let null = q_t.transpose().columns(2, k - 2).into_owned();
        let coef = &lead * null;

        Ok(Self {
            k,
            center,
            scale,
            knots,
            coef,
        })
    }

    pub fn basis_dim(&self) -> usize {
        self.k
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    /// Basis row without the constant: `[wiggly_1..wiggly_{k-2}, x]`.
    pub fn evaluate(&self, x: f64) -> DVector<f64> {
        let z = (x - self.center) / self.scale;
        let kern =
            DVector::from_iterator(self.knots.len(), self.knots.iter().map(|&u| radial(z - u)));
        let wiggly = self.coef.tr_mul(&kern);
        let mut out = DVector::zeros(self.k - 1);
        out.rows_mut(0, self.k - 2).copy_from(&wiggly);
        out[self.k - 2] = z;
        out
    }

    /// `n × (k-1)` basis without the constant column.
    pub fn matrix(&self, xs: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(xs.len(), self.k - 1);
        for (r, &x) in xs.iter().enumerate() {
            out.set_row(r, &self.evaluate(x).transpose());
        }
        out
    }

    /// `n × k` basis with the constant as the first column.
    pub fn matrix_with_constant(&self, xs: &[f64]) -> DMatrix<f64> {
        self.matrix(xs).insert_column(0, 1.0)
    }
}

fn radial(r: f64) -> f64 {
    r.abs().powi(3)
}

/// `n × (k-1)` thin plate basis of `x` (constant absorbed by the intercept).
pub fn tprs_basis(x: &[f64], k: usize) -> Result<DMatrix<f64>> {
    Ok(ThinPlateSpline::new(x, k, DEFAULT_MAX_KNOTS)?.matrix(x))
}
