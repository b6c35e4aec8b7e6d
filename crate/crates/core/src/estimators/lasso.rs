use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::FitOptions;
use crate::error::{Error, Result};
use crate::rng::rng_from;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_LAMBDA_COUNT: usize = 100;
/// Smallest grid value as a fraction of `λ_max`.
pub const DEFAULT_LAMBDA_RATIO: f64 = 1e-4;

const MAX_SWEEPS: usize = 100_000;
const TOLERANCE: f64 = 1e-13;
const FOLD_STREAM: u64 = 0x1a55_0f01d;

/// Solutions of `min_b Σᵢ(yᵢ − Σₖ xᵢₖbₖ)² + λ Σₖ|bₖ|` along a decreasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
}

/// CV trace and support chosen by the one-standard-error rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSelection {
    /// Zero-based columns with nonzero coefficient (or `[0]` on fallback).
    pub indices: Vec<usize>,
    pub lambda: f64,
    pub lambdas: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub min_index: usize,
    pub chosen_index: usize,
    pub folds: usize,
    /// The chosen solution was empty and the first component was used.
    pub fallback: bool,
}

fn check(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, response {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::Dimension("design has no columns".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LASSO input".into()));
    }
    Ok(())
}

/// `max_k |2 Σᵢ yᵢ xᵢₖ|`, the smallest penalty with an all-zero solution.
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    (0..x.ncols())
        .map(|k| (2.0 * x.column(k).iter().zip(y).map(|(a, b)| a * b).sum::<f64>()).abs())
        .fold(0.0, f64::max)
}

/// `count` log-spaced values from `lambda_max` down to `lambda_max · ratio`.
pub fn lambda_grid(lambda_max: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..count)
        .map(|i| (hi + (lo - hi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn residual(x: &DMatrix<f64>, y: &[f64], b: &[f64]) -> Vec<f64> {
    (0..y.len())
        .map(|i| y[i] - (0..b.len()).map(|k| x[(i, k)] * b[k]).sum::<f64>())
        .collect()
}

/// Cyclic coordinate descent at one `λ`, warm-started from `b`.
pub fn coordinate_descent(x: &DMatrix<f64>, y: &[f64], lambda: f64, b: &mut [f64]) -> Result<()> {
    check(x, y)?;
    if b.len() != x.ncols() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} columns",
            b.len(),
            x.ncols()
        )));
    }
    let q: Vec<f64> = (0..x.ncols()).map(|k| x.column(k).norm_squared()).collect();
    let scale = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut r = residual(x, y, b);
    for _ in 0..MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for k in 0..b.len() {
            if q[k] == 0.0 {
                b[k] = 0.0;
                continue;
            }
            let col = x.column(k);
            let rho: f64 = col.iter().zip(&r).map(|(a, e)| a * e).sum::<f64>() + q[k] * b[k];
            let new = soft(rho, 0.5 * lambda) / q[k];
            let delta = new - b[k];
            if delta != 0.0 {
                for (e, a) in r.iter_mut().zip(col.iter()) {
                    *e -= a * delta;
                }
                b[k] = new;
                change = change.max(delta.abs() * q[k].sqrt());
            }
        }
        if change <= TOLERANCE * scale {
            return Ok(());
        }
    }
    Ok(())
}

pub fn lasso_path(x: &DMatrix<f64>, y: &[f64], lambdas: &[f64]) -> Result<LassoPath> {
    check(x, y)?;
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidConfig("penalties must be finite and nonnegative".into()));
    }
    let mut b = vec![0.0; x.ncols()];
    let mut coefficients = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        coordinate_descent(x, y, l, &mut b)?;
        coefficients.push(b.clone());
    }
    Ok(LassoPath {
        lambdas: lambdas.to_vec(),
        coefficients,
    })
}

/// Largest violation of the subgradient conditions with `g = −2Xᵀ(y − Xb)`:
/// `|gₖ + λ sign bₖ|` on the support and `max(|gₖ| − λ, 0)` off it.
pub fn kkt_violation(x: &DMatrix<f64>, y: &[f64], lambda: f64, b: &[f64]) -> f64 {
    let r = residual(x, y, b);
    (0..b.len())
        .map(|k| {
            let g = -2.0 * x.column(k).iter().zip(&r).map(|(a, e)| a * e).sum::<f64>();
            if b[k] != 0.0 {
                (g + lambda * b[k].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn select_rows(x: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let sub = DMatrix::from_fn(rows.len(), x.ncols(), |i, k| x[(rows[i], k)]);
    (sub, rows.iter().map(|&i| y[i]).collect())
}

/// K-fold CV over the penalty grid and the one-standard-error rule: the
/// largest `λ` whose mean CV error is within one standard error of the
/// minimum. An empty support falls back to the first column.
pub fn lasso_select(x: &DMatrix<f64>, y: &[f64], options: &FitOptions) -> Result<LassoSelection> {
    check(x, y)?;
    let n = y.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("LASSO CV needs at least 2 rows, got {n}")));
    }
    if options.folds < 2 || options.lambda_count == 0 || !(options.lambda_ratio > 0.0 && options.lambda_ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "bad LASSO options: folds {}, grid {}, ratio {}",
            options.folds, options.lambda_count, options.lambda_ratio
        )));
    }
    let folds = options.folds.min(n);
    let lmax = lambda_max(x, y);
    if lmax == 0.0 {
        return Ok(LassoSelection {
            indices: vec![0],
            lambda: 0.0,
            lambdas: vec![],
            cv_mean: vec![],
            cv_se: vec![],
            min_index: 0,
            chosen_index: 0,
            folds,
            fallback: true,
        });
    }
    let lambdas = lambda_grid(lmax, options.lambda_count, options.lambda_ratio);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(options.seed, &[FOLD_STREAM]));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let mut errors = vec![vec![0.0; folds]; lambdas.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let (xt, yt) = select_rows(x, y, &train);
        let path = lasso_path(&xt, &yt, &lambdas)?;
        for (j, b) in path.coefficients.iter().enumerate() {
            let mse = test
                .iter()
                .map(|&i| {
                    let pred: f64 = (0..b.len()).map(|k| x[(i, k)] * b[k]).sum();
                    (y[i] - pred).powi(2)
                })
                .sum::<f64>()
                / test.len() as f64;
            errors[j][f] = mse;
        }
    }
    let fl = folds as f64;
    let cv_mean: Vec<f64> = errors.iter().map(|e| e.iter().sum::<f64>() / fl).collect();
    let cv_se: Vec<f64> = errors
        .iter()
        .zip(&cv_mean)
        .map(|(e, m)| (e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (fl - 1.0)).sqrt() / fl.sqrt())
        .collect();
    let mut min_index = 0;
    for (j, &v) in cv_mean.iter().enumerate() {
        if v < cv_mean[min_index] {
            min_index = j;
        }
    }
    let bound = cv_mean[min_index] + cv_se[min_index];
    let chosen_index = cv_mean.iter().position(|&v| v <= bound).unwrap_or(min_index);
    let path = lasso_path(x, y, &lambdas[..=chosen_index])?;
    let b = &path.coefficients[chosen_index];
    let mut indices: Vec<usize> = (0..b.len()).filter(|&k| b[k] != 0.0).collect();
    let fallback = indices.is_empty();
    if fallback {
        indices.push(0);
    }
    Ok(LassoSelection {
        indices,
        lambda: lambdas[chosen_index],
        lambdas,
        cv_mean,
        cv_se,
        min_index,
        chosen_index,
        folds,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Columns orthogonal with squared norms `n·a_k`, like full-sample scores.
    fn orthogonal_design(n: usize, a: &[f64]) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw = DMatrix::from_fn(n, a.len(), |_, _| rng.random_range(-1.0..1.0));
        let q = raw.qr().q();
        DMatrix::from_fn(n, a.len(), |i, k| q[(i, k)] * (n as f64 * a[k]).sqrt())
    }

    #[test]
    fn zero_above_lambda_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lmax = lambda_max(&x, &y);
        let path = lasso_path(&x, &y, &[lmax * 1.5, lmax]).unwrap();
        assert!(path.coefficients.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        let path = lasso_path(&x, &y, &[lmax * 0.99]).unwrap();
        assert!(path.coefficients[0].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn orthogonal_design_soft_thresholds_ols() {
        let n = 50;
        let a = [2.0, 0.8, 0.3];
        let x = orthogonal_design(n, &a);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (0..n)
            .map(|i| 1.5 * x[(i, 0)] - 0.4 * x[(i, 1)] + 0.2 * x[(i, 2)] + rng.random_range(-0.5..0.5))
            .collect();
        let ols: Vec<f64> = (0..3)
            .map(|k| x.column(k).iter().zip(&y).map(|(s, v)| s * v).sum::<f64>() / (n as f64 * a[k]))
            .collect();
        let lambdas = lambda_grid(lambda_max(&x, &y), 30, 1e-3);
        let mut with_zero = lambdas.clone();
        with_zero.push(0.0);
        let path = lasso_path(&x, &y, &with_zero).unwrap();
        for (l, b) in with_zero.iter().zip(&path.coefficients) {
            for k in 0..3 {
                let want = soft(ols[k], l / (2.0 * n as f64 * a[k]));
                assert!((b[k] - want).abs() < 1e-8, "λ={l} k={k}: {} vs {want}", b[k]);
            }
        }
    }

    #[test]
    fn kkt_holds_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(10..60);
            let p = rng.random_range(1..7);
            let x = DMatrix::from_fn(n, p, |_, k| rng.random_range(-1.0..1.0) * (k + 1) as f64);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lambdas = lambda_grid(lambda_max(&x, &y), 20, 1e-4);
            let path = lasso_path(&x, &y, &lambdas).unwrap();
            for (l, b) in lambdas.iter().zip(&path.coefficients) {
                assert!(kkt_violation(&x, &y, *l, b) < 1e-6);
            }
        }
    }

    #[test]
    fn noiseless_single_column_selected() {
        let x = orthogonal_design(60, &[3.0, 1.0, 0.5, 0.2]);
        let y: Vec<f64> = (0..60).map(|i| 2.0 * x[(i, 0)]).collect();
        let sel = lasso_select(&x, &y, &FitOptions::with_seed(9)).unwrap();
        assert_eq!(sel.indices, vec![0]);
        assert!(!sel.fallback);
    }

    #[test]
    fn zero_response_falls_back() {
        let x = orthogonal_design(20, &[1.0, 0.5]);
        let sel = lasso_select(&x, &[0.0; 20], &FitOptions::default()).unwrap();
        assert_eq!(sel.indices, vec![0]);
        assert!(sel.fallback);
    }

    #[test]
    fn selection_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(40, 5, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..40).map(|i| x[(i, 1)] + rng.random_range(-1.0..1.0)).collect();
        let a = lasso_select(&x, &y, &FitOptions::with_seed(5)).unwrap();
        let b = lasso_select(&x, &y, &FitOptions::with_seed(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.chosen_index <= a.min_index);
        assert!(a.cv_mean[a.chosen_index] <= a.cv_mean[a.min_index] + a.cv_se[a.min_index]);
    }
}
