use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::MarSample;
use crate::error::{Error, Result};
use crate::functional::FunctionalSample;

/// Lower clamp for fitted probabilities, bounding IPW weights by 20.
pub const PROBABILITY_FLOOR: f64 = 0.05;

/// Candidate bandwidths as multiples of the median pairwise L² distance.
pub const BANDWIDTH_MULTIPLIERS: [f64; 15] = [
    0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5,
];

/// Local-constant Nadaraya–Watson fit of `P(R = 1 | X)` with the Gaussian
/// kernel `exp(−u²/2)` on L² distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservanceModel {
    pub bandwidth: f64,
    pub floor: f64,
    /// `p̂(Xᵢ)` clamped to `[floor, 1]`.
    pub probabilities: Vec<f64>,
    /// `(bandwidth, LOO squared error)` for every candidate tried.
    pub cv: Vec<(f64, f64)>,
}

/// Symmetric matrix of L² distances `‖Xᵢ − Xⱼ‖` under the trapezoid rule.
pub fn pairwise_distances(x: &FunctionalSample) -> DMatrix<f64> {
    let n = x.n();
    let w = x.grid().weights();
    let v = x.values();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = (0..w.len())
                .map(|t| {
                    let e = v[(i, t)] - v[(j, t)];
                    w[t] * e * e
                })
                .sum();
            d[(i, j)] = s.sqrt();
            d[(j, i)] = d[(i, j)];
        }
    }
    d
}

fn kernel(u: f64) -> f64 {
    (-0.5 * u * u).exp()
}

fn indicator(observed: &[bool]) -> Vec<f64> {
    observed.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect()
}

fn fitted(d: &DMatrix<f64>, r: &[f64], h: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..n {
                let k = kernel(d[(i, j)] / h);
                num += k * r[j];
                den += k;
            }
            (num / den).clamp(PROBABILITY_FLOOR, 1.0)
        })
        .collect()
}

fn loo_error(d: &DMatrix<f64>, r: &[f64], h: f64) -> f64 {
    let n = r.len();
    let total: f64 = r.iter().sum();
    let mut err = 0.0;
    for i in 0..n {
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..n {
            if j != i {
                let k = kernel(d[(i, j)] / h);
                num += k * r[j];
                den += k;
            }
        }
        let p = if den > 0.0 {
            num / den
        } else {
            (total - r[i]) / (n - 1) as f64
        };
        err += (r[i] - p).powi(2);
    }
    err / n as f64
}

fn median_distance(d: &DMatrix<f64>) -> Result<f64> {
    let n = d.nrows();
    let mut all: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| d[(i, j)])
        .collect();
    all.sort_by(f64::total_cmp);
    let positive: Vec<f64> = all.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::Degenerate("all pairwise curve distances are zero".into()));
    }
    let med = median(&all);
    // Mostly duplicated curves: scale by the distinct pairs instead.
    Ok(if med > 0.0 { med } else { median(&positive) })
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

fn check(sample: &MarSample) -> Result<()> {
    if sample.n() < 3 {
        return Err(Error::Degenerate(format!(
            "observance model needs at least 3 curves, got {}",
            sample.n()
        )));
    }
    Ok(())
}

/// Fits `p̂` choosing the bandwidth from the grid by leave-one-out squared
/// error on the indicators. Ties keep the smaller bandwidth.
pub fn fit_observance(sample: &MarSample) -> Result<ObservanceModel> {
    check(sample)?;
    let d = pairwise_distances(sample.x());
    let scale = median_distance(&d)?;
    let r = indicator(sample.observed());
    let cv: Vec<(f64, f64)> = BANDWIDTH_MULTIPLIERS
        .iter()
        .map(|m| {
            let h = m * scale;
            (h, loo_error(&d, &r, h))
        })
        .collect();
    let mut best = 0;
    for (i, c) in cv.iter().enumerate() {
        if c.1 < cv[best].1 {
            best = i;
        }
    }
    let bandwidth = cv[best].0;
    Ok(ObservanceModel {
        bandwidth,
        floor: PROBABILITY_FLOOR,
        probabilities: fitted(&d, &r, bandwidth),
        cv,
    })
}

pub fn fit_observance_with_bandwidth(sample: &MarSample, bandwidth: f64) -> Result<ObservanceModel> {
    check(sample)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let d = pairwise_distances(sample.x());
    let r = indicator(sample.observed());
    Ok(ObservanceModel {
        bandwidth,
        floor: PROBABILITY_FLOOR,
        probabilities: fitted(&d, &r, bandwidth),
        cv: vec![(bandwidth, loo_error(&d, &r, bandwidth))],
    })
}
