//! Projected Cramér–von Mises test of the functional linear model, with the
//! golden-section wild bootstrap for calibration.

mod amatrix;

pub use amatrix::{build_a_matrix, sphere_factor, AMatrix, COINCIDENCE_TOLERANCE};

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate, Estimate, FitOptions, FunctionalSlope, MarSample, Method};
use crate::functional::FpcBasis;
use crate::rng::{rng_from, Rng};

const MULTIPLIER_STREAM: u64 = 0x901d;
const REPLICATE_STREAM: u64 = 0xb007;

/// Outcome of a bootstrap goodness-of-fit test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub method: Method,
    /// Zero-based FPC positions spanning the projection directions.
    pub indices: Vec<usize>,
    pub n_obs: usize,
    pub statistic: f64,
    pub bootstrap: usize,
    pub p_value: f64,
    pub seed: u64,
    pub bootstrap_statistics: Vec<f64>,
    /// Wall time; left out of serialized output so reports are reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl GofResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// `ε̂ᵢ = Yᵢ − Ŷᵢ` for the observed responses, in `observed_index` order.
pub fn residuals(sample: &MarSample, basis: &FpcBasis, slope: &FunctionalSlope) -> Vec<f64> {
    sample
        .observed_index()
        .iter()
        .map(|&i| sample.y()[i] - slope.predict_row(basis, i))
        .collect()
}

/// `ε̂ᵀAε̂ / n_S²`.
pub fn pcvm_statistic(residuals: &[f64], a: &AMatrix) -> Result<f64> {
    let n = residuals.len();
    if a.dim() != n {
        return Err(Error::Dimension(format!(
            "{n} residuals for a {0}x{0} kernel matrix",
            a.dim()
        )));
    }
    let mut q = 0.0;
    for l in 0..n {
        let row: f64 = (0..n).map(|m| a.values[(l, m)] * residuals[m]).sum();
        q += residuals[l] * row;
    }
    Ok((q / (n * n) as f64).max(0.0))
}

pub const GOLDEN_LOW: f64 = -0.618_033_988_749_894_9;
pub const GOLDEN_HIGH: f64 = 1.618_033_988_749_895;
/// `P(V = (1 − √5)/2) = (5 + √5)/10`.
pub const GOLDEN_LOW_PROBABILITY: f64 = 0.723_606_797_749_979;

fn draw_multipliers(rng: &mut Rng, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| {
            if rng.random::<f64>() < GOLDEN_LOW_PROBABILITY {
                GOLDEN_LOW
            } else {
                GOLDEN_HIGH
            }
        })
        .collect()
}

/// IID two-point multipliers with mean 0 and variance 1.
pub fn golden_section_multipliers(count: usize, seed: u64) -> Vec<f64> {
    draw_multipliers(&mut rng_from(seed, &[MULTIPLIER_STREAM]), count)
}

/// Score rows of the observed curves restricted to `indices`.
pub fn observed_scores(basis: &FpcBasis, rows: &[usize], indices: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), indices.len(), |l, k| basis.score(rows[l], indices[k]))
}

/// Fits `method` (LASSO folds seeded by `seed`) and runs the bootstrap test.
pub fn wild_bootstrap_test(
    sample: &MarSample,
    basis: &FpcBasis,
    method: Method,
    bootstrap: usize,
    seed: u64,
) -> Result<GofResult> {
    let fit = estimate(method, sample, basis, &FitOptions::with_seed(seed), None)?;
    bootstrap_estimate(sample, basis, &fit, bootstrap, seed)
}

/// Bootstrap test of an existing fit. Replicates keep the index sets, cutoffs
/// and observance probabilities of `fit`, the observance pattern, and the
/// kernel matrix; only the responses at observed positions are resampled.
pub fn bootstrap_estimate(
    sample: &MarSample,
    basis: &FpcBasis,
    fit: &Estimate,
    bootstrap: usize,
    seed: u64,
) -> Result<GofResult> {
    if bootstrap == 0 {
        return Err(Error::InvalidConfig("bootstrap count must be at least 1".into()));
    }
    let start = Instant::now();
    let rows = sample.observed_index();
    let n = sample.n();
    let plan = &fit.plan;
    let a = build_a_matrix(&observed_scores(basis, rows, &plan.indices))?;
    let fitted = fit.slope.predict(basis);
    let eps = residuals(sample, basis, &fit.slope);
    let statistic = pcvm_statistic(&eps, &a)?;

    let replicate = |b: usize, attempt: u64| -> Result<f64> {
        let mut rng = rng_from(seed, &[REPLICATE_STREAM, b as u64, attempt]);
        let v = draw_multipliers(&mut rng, rows.len());
        let mut y = vec![f64::NAN; n];
        for (l, &i) in rows.iter().enumerate() {
            y[i] = fitted[i] + v[l] * eps[l];
        }
        let slope = plan.refit(basis, &y, sample.observed())?;
        let star: Vec<f64> = rows.iter().map(|&i| y[i] - slope.predict_row(basis, i)).collect();
        let s = pcvm_statistic(&star, &a)?;
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFinite("bootstrap statistic".into()))
        }
    };
    let bootstrap_statistics = (0..bootstrap)
        .into_par_iter()
        .map(|b| {
            replicate(b, 0).or_else(|_| {
                replicate(b, 1).map_err(|e| Error::Bootstrap {
                    replicate: b,
                    message: e.to_string(),
                })
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let exceed = bootstrap_statistics.iter().filter(|&&s| statistic <= s).count();
    Ok(GofResult {
        method: plan.method,
        indices: plan.indices.clone(),
        n_obs: rows.len(),
        statistic,
        bootstrap,
        p_value: exceed as f64 / bootstrap as f64,
        seed,
        bootstrap_statistics,
        elapsed: start.elapsed(),
    })
}
