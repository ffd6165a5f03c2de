//! Acceptance gate. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! nonzero if any fails. Run with `cargo test --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use adimpact::balance::{pct_bias, std_diff_post, std_diff_pre};
use adimpact::design::{
    fit_logistic_irls, inverse_logit, tensor_basis, CubicRegressionSpline, DesignMatrix,
    ThinPlateSpline, DEFAULT_MAX_KNOTS, INTERCEPT,
};
use adimpact::impact::{ci, conditional_variance, impute_and_diff, total_ad, variance_ad};
use adimpact::matching::nn_match;
use adimpact::pipeline::{self, RunConfig};
use adimpact::synth::{generate, true_satt, SynthSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const MATCH_RUNTIME: Duration = Duration::from_secs(5);
const VARIANCE_REL_TOL: f64 = 1e-12;
const LOGIT_TOL: f64 = 1e-6;
const GRID_TOL: f64 = 1e-4;
const PCT_BIAS_DISPLAY_TOL: f64 = 0.15;
const COVERAGE_RANGE: (f64, f64) = (0.85, 0.95);
const COVERAGE_RUNTIME: Duration = Duration::from_secs(180);
const DEBIAS_BALANCE_RATE: f64 = 0.95;
const DEBIAS_CLOSER_RATE: f64 = 0.90;
const SPLINE_RMSE: f64 = 0.01;
const C2_TOL: f64 = 1e-4;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Runs `f(0..n)` over all available cores, preserving order.
fn replicate<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = std::thread::available_parallelism()
        .map_or(1, |p| p.get())
        .min(n.max(1));
    let chunk = n.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let f = &f;
                s.spawn(move || {
                    (t * chunk..((t + 1) * chunk).min(n))
                        .map(f)
                        .collect::<Vec<T>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("replicate thread"))
            .collect()
    })
}

fn synth(n_days: usize, tau: f64) -> SynthSpec {
    SynthSpec {
        n_days,
        tau,
        ..SynthSpec::default()
    }
}

fn criterion_1() -> Outcome {
    // published total row by age and total column by cause
    let by_age_published: i64 = [-44, 21, 1102].iter().sum();
    let by_cause_published: i64 = [716, 305, 58].iter().sum();
    let published = by_age_published == 1079 && by_cause_published == 1079;
    let cfg = RunConfig::default();
    let mut checked = 0;
    for seed in 0..10u64 {
        let (s, _) = generate(&synth(365 + 73 * seed as usize, seed as f64 * 0.5), seed).unwrap();
        let d = pipeline::design(&s.without_outcomes(), &cfg).unwrap();
        let m = pipeline::match_days(&d, &cfg).unwrap();
        let out = pipeline::impact(&s, &d, &m.map, &cfg).unwrap();
        let t = &out.main;
        let total = t.total().ad;
        let by_age: i64 = t
            .ages
            .iter()
            .map(|a| t.get(None, Some(a)).unwrap().ad)
            .sum();
        let by_cause: i64 = t
            .causes
            .iter()
            .map(|c| t.get(Some(c), None).unwrap().ad)
            .sum();
        let cells: i64 = t
            .estimates
            .iter()
            .filter(|e| e.cause.is_some() && e.age.is_some())
            .map(|e| e.ad)
            .sum();
        if total != by_age || total != by_cause || total != cells {
            return outcome(
                false,
                format!("seed {seed}: total {total}, ages {by_age}, causes {by_cause}"),
            );
        }
        checked += 1;
    }
    outcome(
        published,
        format!("{checked} synthetic inputs; published rows sum to 1079"),
    )
}

fn brute_force_match(scores: &[f64], w: &[bool]) -> Vec<(usize, usize)> {
    (0..w.len())
        .filter(|&i| w[i])
        .map(|i| {
            let mut best = None::<(f64, usize)>;
            for j in 0..w.len() {
                if w[j] {
                    continue;
                }
                let d = (scores[i] - scores[j]).abs();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, j));
                }
            }
            (i, best.unwrap().1)
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let instances: Vec<(Vec<f64>, Vec<bool>)> = (0..100)
        .map(|k| {
            // every fourth instance on a coarse grid so ties are common
            let scores = (0..300)
                .map(|_| {
                    let u: f64 = rng.random();
                    if k % 4 == 0 {
                        (u * 40.0).round() / 40.0
                    } else {
                        u
                    }
                })
                .collect();
            let mut w: Vec<bool> = (0..300).map(|_| rng.random_bool(0.55)).collect();
            w[0] = true;
            w[1] = false;
            (scores, w)
        })
        .collect();
    let start = Instant::now();
    let maps: Vec<_> = instances
        .iter()
        .map(|(s, w)| nn_match(s, w).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let mismatches = instances
        .iter()
        .zip(&maps)
        .filter(|((s, w), m)| {
            let got: Vec<(usize, usize)> =
                m.pairs().iter().map(|p| (p.treated, p.control)).collect();
            got != brute_force_match(s, w)
        })
        .count();
    outcome(
        mismatches == 0 && elapsed < MATCH_RUNTIME,
        format!("100 × 300 days, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

fn criterion_3() -> Outcome {
    let scores: Vec<f64> = [40, 22, 45, 22, 32, 12, 42, 27, 18, 52, 32, 37]
        .iter()
        .map(|&v| v as f64 / 64.0)
        .collect();
    let w = [
        true, false, true, false, true, false, true, false, false, true, false, false,
    ];
    let y: [u64; 12] = [31, 24, 28, 26, 35, 22, 30, 27, 25, 33, 29, 23];

    // direct summation, straight from the definitions
    let n = 12;
    let nearest = |i: usize, pool: &dyn Fn(usize) -> bool| {
        (0..n)
            .filter(|&j| j != i && pool(j))
            .min_by(|&a, &b| {
                (scores[a] - scores[i])
                    .abs()
                    .total_cmp(&(scores[b] - scores[i]).abs())
                    .then(a.cmp(&b))
            })
            .unwrap()
    };
    let mut k = [0usize; 12];
    let mut ad_direct = 0i64;
    for i in (0..n).filter(|&i| w[i]) {
        let j = nearest(i, &|j| !w[j]);
        k[j] += 1;
        ad_direct += y[i] as i64 - y[j] as i64;
    }
    let mut s2_direct = 0.0;
    let mut sigma_direct = [0.0; 12];
    for i in 0..n {
        let j = nearest(i, &|j| w[j] == w[i]);
        let mean = (y[i] + y[j]) as f64 / 2.0;
        sigma_direct[i] = ((y[i] as f64 - mean).powi(2) + (y[j] as f64 - mean).powi(2)) / 1.0;
        let weight = if w[i] { 1.0 } else { -(k[i] as f64) };
        s2_direct += weight.powi(2) * sigma_direct[i];
    }

    let m = nn_match(&scores, &w).unwrap();
    let ad = total_ad(&impute_and_diff(&y, &m).unwrap());
    let sigma = conditional_variance(&y, &scores, &w, 1).unwrap();
    let s2 = variance_ad(&m, &sigma).unwrap();
    let rel = |a: f64, b: f64| {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    };
    let worst_sigma = sigma
        .iter()
        .zip(&sigma_direct)
        .map(|(&a, &b)| rel(a, b))
        .fold(0.0, f64::max);
    let pass = ad == ad_direct
        && ad == 36
        && rel(s2, s2_direct) < VARIANCE_REL_TOL
        && rel(s2, 313.5) < VARIANCE_REL_TOL
        && worst_sigma < VARIANCE_REL_TOL;
    outcome(
        pass,
        format!("AD {ad} (hand 36), s² {s2} (hand 313.5), max σ² rel err {worst_sigma:e}"),
    )
}

fn design_of(cols: &[Vec<f64>], names: &[&str]) -> DesignMatrix {
    let n = cols[0].len();
    let mut data = DMatrix::from_element(n, cols.len() + 1, 1.0);
    for (c, v) in cols.iter().enumerate() {
        data.set_column(c + 1, &nalgebra::DVector::from_column_slice(v));
    }
    let names = std::iter::once(INTERCEPT)
        .chain(names.iter().copied())
        .map(String::from)
        .collect();
    DesignMatrix::new(names, data).unwrap()
}

fn log_lik(b0: f64, b1: f64, x: &[f64], w: &[bool]) -> f64 {
    x.iter()
        .zip(w)
        .map(|(&xi, &wi)| {
            let eta = b0 + b1 * xi;
            // log(1 + e^η) without overflow
            let softplus = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            if wi {
                eta - softplus
            } else {
                -softplus
            }
        })
        .sum()
}

fn grid_argmax(x: &[f64], w: &[bool]) -> (f64, f64) {
    let (mut c0, mut c1, mut step) = (0.0, 0.0, 0.5);
    while step > 1e-7 {
        let mut best = (f64::NEG_INFINITY, c0, c1);
        for i in -10..=10 {
            for j in -10..=10 {
                let (b0, b1) = (c0 + i as f64 * step, c1 + j as f64 * step);
                let ll = log_lik(b0, b1, x, w);
                if ll > best.0 {
                    best = (ll, b0, b1);
                }
            }
        }
        (c0, c1) = (best.1, best.2);
        step /= 5.0;
    }
    (c0, c1)
}

fn criterion_4() -> Outcome {
    let w: Vec<bool> = (0..1000).map(|i| i < 557).collect();
    let z = DesignMatrix::new(vec![INTERCEPT.into()], DMatrix::from_element(1000, 1, 1.0)).unwrap();
    let b0 = fit_logistic_irls(&w, &z).unwrap().beta[0];
    let exact = (0.557f64 / 0.443).ln();
    let intercept_ok = (b0 - exact).abs() < LOGIT_TOL && format!("{b0:.4}") == "0.2290";

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
    let wx: Vec<bool> = x
        .iter()
        .map(|&xi| rng.random::<f64>() < inverse_logit(0.3 + 0.8 * xi))
        .collect();
    let fit = fit_logistic_irls(&wx, &design_of(std::slice::from_ref(&x), &["x"])).unwrap();
    let (g0, g1) = grid_argmax(&x, &wx);
    let gap = (fit.beta[0] - g0).abs().max((fit.beta[1] - g1).abs());
    outcome(
        intercept_ok && gap < GRID_TOL,
        format!(
            "β₀ {b0:.7} (logit 0.557 = {exact:.7}); one-covariate gap to grid optimum {gap:.1e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let a = pct_bias(0.914, 0.013).unwrap();
    let b = pct_bias(0.456, 0.014).unwrap();
    let c = pct_bias(1.810, 0.0).unwrap();
    let pass = format!("{a:.1}") == "98.6"
        && format!("{b:.1}") == "96.9"
        && (a - 98.5).abs() < PCT_BIAS_DISPLAY_TOL
        && (b - 97.0).abs() < PCT_BIAS_DISPLAY_TOL
        && c == 100.0;
    outcome(pass, format!("{a:.3}, {b:.3}, {c}"))
}

fn criterion_6() -> Outcome {
    let (lo, hi) = ci(1079.0, 585.4f64.powi(2), 0.90).unwrap();
    let (lo, hi) = (lo.round() as i64, hi.round() as i64);
    outcome((lo, hi) == (116, 2042), format!("({lo}, {hi})"))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let spec = synth(365, 0.0);
    let covered: Vec<bool> = replicate(500, |r| {
        let (s, _) = generate(&spec, 7000 + r as u64).unwrap();
        let d = pipeline::design(&s.without_outcomes(), &cfg).unwrap();
        let m = pipeline::match_days(&d, &cfg).unwrap();
        let t = pipeline::impact(&s, &d, &m.map, &cfg).unwrap().main;
        let e = t.total();
        e.ci_low <= 0.0 && 0.0 <= e.ci_high
    });
    let elapsed = start.elapsed();
    let rate = covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64;
    outcome(
        (COVERAGE_RANGE.0..=COVERAGE_RANGE.1).contains(&rate) && elapsed < COVERAGE_RUNTIME,
        format!(
            "coverage {:.1}% over 500 replicates, {elapsed:.1?}",
            100.0 * rate
        ),
    )
}

fn criterion_8() -> Outcome {
    let cfg = RunConfig::default();
    let spec = SynthSpec::default();
    let results: Vec<(bool, bool)> = replicate(200, |r| {
        let (s, o) = generate(&spec, 8000 + r as u64).unwrap();
        let d = pipeline::design(&s.without_outcomes(), &cfg).unwrap();
        let m = pipeline::match_days(&d, &cfg).unwrap();
        let w = &d.treatment.w;
        // the generator's confounders: temperature drives exposure, season drives counts
        let confounders = [s.temperature(), o.season.clone()];
        let balanced = confounders.iter().all(|x| {
            let pre = std_diff_pre(x, w).unwrap().unwrap();
            let post = std_diff_post(x, w, &m.map).unwrap().unwrap();
            post.abs() < pre.abs()
        });
        let matching = pipeline::impact(&s, &d, &m.map, &cfg)
            .unwrap()
            .main
            .total()
            .ad as f64;
        let all: Vec<usize> = (0..s.strata().len()).collect();
        let y = s.outcome_sum(&all);
        let mean = |t: bool| {
            let v: Vec<f64> = (0..y.len())
                .filter(|&i| w[i] == t)
                .map(|i| y[i] as f64)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let n_t = w.iter().filter(|&&t| t).count() as f64;
        let naive = n_t * (mean(true) - mean(false));
        let truth = true_satt(&o, w).unwrap() as f64;
        (balanced, (matching - truth).abs() < (naive - truth).abs())
    });
    let n = results.len() as f64;
    let balanced = results.iter().filter(|r| r.0).count() as f64 / n;
    let closer = results.iter().filter(|r| r.1).count() as f64 / n;
    outcome(
        balanced >= DEBIAS_BALANCE_RATE && closer >= DEBIAS_CLOSER_RATE,
        format!(
            "|δ| reduced for temperature and season in {:.1}%, matching closer to truth in {:.1}%",
            100.0 * balanced,
            100.0 * closer
        ),
    )
}

fn criterion_9() -> Outcome {
    let t: Vec<f64> = (0..365).map(|i| i as f64).collect();
    let y: Vec<f64> = t
        .iter()
        .map(|&v| (2.0 * std::f64::consts::PI * v / 365.0).sin())
        .collect();
    let spline = CubicRegressionSpline::new(&t, 10).unwrap();
    let x = spline.matrix(&t).insert_column(0, 1.0);
    let beta = x
        .clone()
        .svd(true, true)
        .solve(&nalgebra::DVector::from_column_slice(&y), 1e-12)
        .unwrap();
    let resid = nalgebra::DVector::from_column_slice(&y) - &x * beta;
    let rmse = (resid.norm_squared() / y.len() as f64).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let temp: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 30.0).collect();
    let hum: Vec<f64> = (0..400)
        .map(|_| (rng.random::<f64>() * 60.0 + 40.0).round())
        .collect();
    let a = ThinPlateSpline::new(&temp, 5, DEFAULT_MAX_KNOTS)
        .unwrap()
        .matrix_with_constant(&temp);
    let b = ThinPlateSpline::new(&hum, 3, DEFAULT_MAX_KNOTS)
        .unwrap()
        .matrix_with_constant(&hum);
    let tensor_cols = tensor_basis(&a, &b).unwrap().ncols();

    // one-sided second differences on each side of every interior knot
    let h = 1e-2;
    let f = |x: f64| spline.evaluate(x);
    let mut worst = 0.0f64;
    for &k in spline.interior_knots() {
        let left = (f(k - 2.0 * h) - 2.0 * f(k - h) + f(k)) / (h * h);
        let right = (f(k) - 2.0 * f(k + h) + f(k + 2.0 * h)) / (h * h);
        let slope = ((f(k) - f(k - h)) - (f(k + h) - f(k))) / h;
        worst = worst.max((left - right).amax()).max(slope.amax());
    }
    outcome(
        rmse < SPLINE_RMSE && tensor_cols == 15 && worst < C2_TOL,
        format!("RMSE {rmse:.2e}, tensor columns {tensor_cols}, max jump at knots {worst:.1e}"),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let input = pipeline::run_synth(&synth(730, 1.0), 10, dir.path()).unwrap();
    let run = |name: &str| {
        let cfg = RunConfig {
            input: Some(input.clone()),
            output_dir: dir.path().join(name),
            ..RunConfig::default()
        };
        pipeline::run_all(&cfg).unwrap();
        let mut files: Vec<_> = std::fs::read_dir(&cfg.output_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| {
                (
                    p.file_name().unwrap().to_owned(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect::<Vec<_>>()
    };
    let a = run("first");
    let b = run("second");
    outcome(
        a == b && a.len() >= 15,
        format!("{} report files identical across runs", a.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("additivity", criterion_1),
        ("matching oracle", criterion_2),
        ("variance oracle", criterion_3),
        ("logistic fit", criterion_4),
        ("balance arithmetic", criterion_5),
        ("CI arithmetic", criterion_6),
        ("coverage", criterion_7),
        ("debiasing", criterion_8),
        ("spline bases", criterion_9),
        ("determinism", criterion_10),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if filter
            .as_ref()
            .is_some_and(|f| !name.contains(f.as_str()) && *f != (i + 1).to_string())
        {
            continue;
        }
        let o = run();
        println!(
            "[{}] {:>2}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
