use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Score vectors closer than this fraction of the largest score norm count
/// as coincident.
pub const COINCIDENCE_TOLERANCE: f64 = 1e-12;

/// Kernel matrix of the projected Cramér–von Mises quadratic form.
#[derive(Debug, Clone, PartialEq)]
pub struct AMatrix {
    pub values: DMatrix<f64>,
    /// Number of FPC coordinates `N_𝓚` of the score vectors.
    pub n_k: usize,
}

impl AMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

/// `π^{N/2−1} / Γ(N/2)`, half the surface area of the unit sphere in `ℝᴺ`
/// divided by `π`.
pub fn sphere_factor(n_k: usize) -> f64 {
    let h = n_k as f64 / 2.0;
    PI.powf(h - 1.0) / gamma(h)
}

/// Angle between `a` and `b` by Kahan's half-angle formula, accurate near
/// 0 and π where `acos` of the cosine loses half the digits.
fn angle(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Builds `A_lm = Σ_r c_N · A⁰_lmr` from the rows of `scores` (one row per
/// observed curve, one column per selected component). `A⁰_lmr` is `2π` when
/// all three score vectors coincide, `π` when two do, and otherwise
/// `|π − θ|` with `θ` the angle at `s_r` between `s_l − s_r` and `s_m − s_r`
/// (the result always lies in `[0, π]`, so no clamping is needed).
pub fn build_a_matrix(scores: &DMatrix<f64>) -> Result<AMatrix> {
    let (n, n_k) = scores.shape();
    if n < 2 || n_k == 0 {
        return Err(Error::Dimension(format!(
            "need at least 2 score vectors of dimension >= 1, got {n}x{n_k}"
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score matrix".into()));
    }
    let points: Vec<Vec<f64>> = (0..n).map(|i| scores.row(i).iter().copied().collect()).collect();
    let scale = points
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let tol = COINCIDENCE_TOLERANCE * scale;

    // diff[r][l] = s_l − s_r and its norm.
    let diffs: Vec<Vec<(Vec<f64>, f64)>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|l| {
                    let d: Vec<f64> = points[l].iter().zip(&points[r]).map(|(a, b)| a - b).collect();
                    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (d, norm)
                })
                .collect()
        })
        .collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|l| {
            let mut row = vec![0.0; n];
            for (m, cell) in row.iter_mut().enumerate().skip(l) {
                let mut sum = 0.0;
                for diff in &diffs {
                    let (dl, nl) = &diff[l];
                    let (dm, nm) = &diff[m];
                    let zl = *nl <= tol;
                    let zm = *nm <= tol;
                    sum += if zl && zm {
                        2.0 * PI
                    } else if zl || zm {
                        PI
                    } else {
                        (PI - angle(dl, *nl, dm, *nm)).abs()
                    };
                }
                *cell = sum;
            }
            row
        })
        .collect();

    let factor = sphere_factor(n_k);
    let mut values = DMatrix::zeros(n, n);
    for l in 0..n {
        for m in l..n {
            let v = factor * rows[l][m];
            values[(l, m)] = v;
            values[(m, l)] = v;
        }
    }
    Ok(AMatrix { values, n_k })
}
