//! Logistic propensity model fitted by iteratively reweighted least squares.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::DesignMatrix;
use crate::error::{Error, Result};

/// Fitted scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]`.
pub const SCORE_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrlsOptions {
    /// Stop when the absolute deviance change falls below this.
    pub deviance_tol: f64,
    pub max_iter: usize,
    /// Any |linear predictor| above this is treated as separation.
    pub separation_eta: f64,
    pub max_step_halvings: usize,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            deviance_tol: 1e-8,
            max_iter: 100,
            separation_eta: 30.0,
            max_step_halvings: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityFit {
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub linear_predictor: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub deviance: f64,
    /// Deviance after each accepted iteration, starting from β = 0.
    pub deviance_trace: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub warning: Option<String>,
}

pub fn inverse_logit(eta: f64) -> f64 {
    let e = if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let x = eta.exp();
        x / (1.0 + x)
    };
    e.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn deviance(w: &[bool], eta: &DVector<f64>) -> f64 {
    2.0 * w
        .iter()
        .zip(eta.iter())
        .map(|(&y, &e)| if y { softplus(-e) } else { softplus(e) })
        .sum::<f64>()
}

pub fn fit_logistic_irls(w: &[bool], z: &DesignMatrix) -> Result<PropensityFit> {
    fit_logistic_irls_with(w, z, &IrlsOptions::default())
}

pub fn fit_logistic_irls_with(
    w: &[bool],
    z: &DesignMatrix,
    opts: &IrlsOptions,
) -> Result<PropensityFit> {
    let x = z.matrix();
    let (n, p) = x.shape();
    if w.len() != n {
        return Err(Error::Dimension(format!(
            "{} treatment values for {n} design rows",
            w.len()
        )));
    }
    let n_treated = w.iter().filter(|&&t| t).count();
    if n_treated == 0 || n_treated == n {
        return Err(Error::SingleClass);
    }
    let y = DVector::from_iterator(n, w.iter().map(|&t| f64::from(u8::from(t))));

    let mut beta = DVector::<f64>::zeros(p);
    let mut eta = DVector::<f64>::zeros(n);
    let mut dev = deviance(w, &eta);
    let mut trace = vec![dev];
    let mut converged = false;
    let mut warning = None;
    let mut n_iter = 0;

    while n_iter < opts.max_iter {
        n_iter += 1;
        let mu = eta.map(inverse_logit);
        let weights = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let sqrt_w = weights.map(f64::sqrt);
        let working = DVector::from_fn(n, |i, _| eta[i] + (y[i] - mu[i]) / weights[i]);

        let mut xw = x.clone();
        for (r, s) in sqrt_w.iter().enumerate() {
            xw.row_mut(r).scale_mut(*s);
        }
        let rhs = working.component_mul(&sqrt_w);
        let proposal = solve_least_squares(xw, rhs, z.names())?;

        let mut candidate = proposal;
        let mut cand_eta = x * &candidate;
        let mut cand_dev = deviance(w, &cand_eta);
        let mut halvings = 0;
        // NaN counts as an increase
        let increased = |d: f64| d.is_nan() || d > dev + 1e-12 * dev.abs();
        while increased(cand_dev) && halvings < opts.max_step_halvings {
            candidate = (&beta + &candidate) * 0.5;
            cand_eta = x * &candidate;
            cand_dev = deviance(w, &cand_eta);
            halvings += 1;
        }
        if increased(cand_dev) {
            warning = Some(format!(
                "IRLS could not decrease the deviance at iteration {n_iter}"
            ));
            break;
        }
        let change = (dev - cand_dev).abs();
        beta = candidate;
        eta = cand_eta;
        dev = cand_dev;
        trace.push(dev);

        let max_eta = eta.amax();
        if max_eta > opts.separation_eta {
            warning = Some(format!(
                "possible separation: |linear predictor| reached {max_eta:.1} (> {})",
                opts.separation_eta
            ));
            break;
        }
        if change < opts.deviance_tol {
            converged = true;
            break;
        }
    }
    if !converged && warning.is_none() {
        warning = Some(format!(
            "IRLS did not converge in {} iterations",
            opts.max_iter
        ));
    }
    if let Some(msg) = &warning {
        warn!("{msg}");
    }

    let e_hat: Vec<f64> = eta.iter().map(|&e| inverse_logit(e)).collect();
    let std_errors = standard_errors(x, &e_hat, z.names())?;
    Ok(PropensityFit {
        columns: z.names().to_vec(),
        beta: beta.iter().copied().collect(),
        std_errors,
        linear_predictor: eta.iter().copied().collect(),
        e_hat,
        deviance: dev,
        deviance_trace: trace,
        converged,
        n_iter,
        warning,
    })
}

/// Scores `inverse_logit(Z β)` for a design whose columns match the fit.
pub fn predict_propensity(fit: &PropensityFit, z: &DesignMatrix) -> Result<Vec<f64>> {
    if fit.columns != z.names() {
        return Err(Error::Dimension(format!(
            "fit has columns {:?}, design has {:?}",
            fit.columns,
            z.names()
        )));
    }
    let beta = DVector::from_column_slice(&fit.beta);
    Ok((z.matrix() * beta)
        .iter()
        .map(|&e| inverse_logit(e))
        .collect())
}

fn r_factor_check(r: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let diag: Vec<f64> = r.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let bad: Vec<String> = diag
        .iter()
        .enumerate()
        .filter(|(_, &d)| d.is_nan() || d <= 1e-10 * max)
        .map(|(i, _)| names[i].clone())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient { columns: bad })
    }
}

fn solve_least_squares(
    a: DMatrix<f64>,
    mut b: DVector<f64>,
    names: &[String],
) -> Result<DVector<f64>> {
    let p = a.ncols();
    let qr = a.qr();
    let r = qr.r();
    r_factor_check(&r, names)?;
    qr.q_tr_mul(&mut b);
    r.solve_upper_triangular(&b.rows(0, p).into_owned())
        .ok_or_else(|| Error::Numerical("singular weighted least-squares system".into()))
}

fn standard_errors(x: &DMatrix<f64>, e_hat: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let p = x.ncols();
    let mut xw = x.clone();
    for (r, e) in e_hat.iter().enumerate() {
        xw.row_mut(r).scale_mut((e * (1.0 - e)).sqrt());
    }
    let r = xw.qr().r();
    if r_factor_check(&r, names).is_err() {
        return Ok(vec![f64::INFINITY; p]);
    }
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("singular information matrix".into()))?;
    Ok((0..p).map(|i| r_inv.row(i).norm()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::INTERCEPT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn design(cols: &[(&str, Vec<f64>)]) -> DesignMatrix {
        let n = cols[0].1.len();
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(cols.iter().map(|(n, _)| n.to_string()));
        let data = DMatrix::from_fn(n, cols.len() + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                cols[c - 1].1[r]
            }
        });
        DesignMatrix::new(names, data).unwrap()
    }

    fn intercept_only(n: usize) -> DesignMatrix {
        DesignMatrix::new(vec![INTERCEPT.into()], DMatrix::from_element(n, 1, 1.0)).unwrap()
    }

    #[test]
    fn intercept_only_is_logit_of_mean() {
        // 557 of 1000 treated
        let w: Vec<bool> = (0..1000).map(|i| i < 557).collect();
        let fit = fit_logistic_irls(&w, &intercept_only(1000)).unwrap();
        let expected = (0.557f64 / 0.443).ln();
        assert!(fit.converged);
        assert!((fit.beta[0] - expected).abs() < 1e-6);
        assert!((fit.beta[0] - 0.2290).abs() < 1e-4);
    }

    #[test]
    fn single_class_rejected() {
        let w = vec![true; 10];
        assert!(matches!(
            fit_logistic_irls(&w, &intercept_only(10)),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn separation_flagged() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let w: Vec<bool> = x.iter().map(|&v| v >= 20.0).collect();
        let fit = fit_logistic_irls(&w, &design(&[("x", x)])).unwrap();
        assert!(!fit.converged);
        assert!(fit.warning.unwrap().contains("separation"));
    }

    #[test]
    fn deviance_monotone_and_score_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 500;
        let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let w: Vec<bool> = x1
            .iter()
            .zip(&x2)
            .map(|(a, b)| rng.random::<f64>() < inverse_logit(0.3 + 1.2 * a - 0.8 * b))
            .collect();
        let z = design(&[("x1", x1), ("x2", x2)]);
        let fit = fit_logistic_irls(&w, &z).unwrap();
        assert!(fit.converged);
        for pair in fit.deviance_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9);
        }
        for c in 0..z.n_cols() {
            let score: f64 = (0..n)
                .map(|i| (f64::from(u8::from(w[i])) - fit.e_hat[i]) * z.matrix()[(i, c)])
                .sum();
            assert!(score.abs() < 1e-6, "column {c}: {score}");
        }
        let recomputed = predict_propensity(&fit, &z).unwrap();
        for (a, b) in recomputed.iter().zip(&fit.e_hat) {
            assert!((a - b).abs() < 1e-12);
        }
        let treated: Vec<f64> = (0..n).filter(|&i| w[i]).map(|i| fit.e_hat[i]).collect();
        let control: Vec<f64> = (0..n).filter(|&i| !w[i]).map(|i| fit.e_hat[i]).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&treated) >= mean(&control));
    }

    #[test]
    fn null_slope_within_three_standard_errors() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 400;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let fit = fit_logistic_irls(&w, &design(&[("x", x)])).unwrap();
            assert!(fit.beta[1].abs() < 3.0 * fit.std_errors[1], "seed {seed}");
        }
    }

    #[test]
    fn predict_examples() {
        let z = design(&[("x", vec![1.0, 2.0, 3.0])]);
        let zero = PropensityFit {
            columns: z.names().to_vec(),
            beta: vec![0.0, 0.0],
            std_errors: vec![0.0; 2],
            linear_predictor: vec![0.0; 3],
            e_hat: vec![0.5; 3],
            deviance: 0.0,
            deviance_trace: vec![],
            converged: true,
            n_iter: 0,
            warning: None,
        };
        assert_eq!(predict_propensity(&zero, &z).unwrap(), vec![0.5; 3]);
        assert!((inverse_logit(0.2290) - 0.557).abs() < 1e-4);

        let mut raised = zero.clone();
        raised.beta[1] = 0.1;
        let up = predict_propensity(&raised, &z).unwrap();
        assert!(up.iter().all(|&e| e > 0.5));

        let other = design(&[("y", vec![1.0, 2.0, 3.0])]);
        assert!(predict_propensity(&zero, &other).is_err());
    }

    #[test]
    fn clamped_scores() {
        assert_eq!(inverse_logit(1000.0), 1.0 - SCORE_CLAMP);
        assert_eq!(inverse_logit(-1000.0), SCORE_CLAMP);
    }
}
