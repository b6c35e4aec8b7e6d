//! Functional principal components of a sample.
//!
//! The empirical covariance operator `Γ̂ η = n⁻¹ Σ ⟨Xᵢ, η⟩ Xᵢ` is
//! eigensolved through the centered data matrix `Z` with columns scaled by
//! `√(w_j / n)`, where `w_j` are the trapezoid weights. With `v_k` the unit
//! eigenvectors of `ZᵀZ` (obtained from the smaller of `ZᵀZ` and `ZZᵀ`), the
//! eigenvalues are `σ_k²`, the eigenfunctions `ψ_k = W^{-1/2} v_k` and the
//! scores `√n (Z v_k)ᵢ`, which are exactly the quadrature projections
//! `⟨Xᵢ − X̄, ψ_k⟩`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{FunctionalSample, Grid};
use crate::error::{Error, Result};

pub const DEFAULT_VAR_CUTOFF: f64 = 0.005;

const EIGEN_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FpcBasis {
    pub grid: Grid,
    /// Mean curve removed before decomposition.
    pub mean: Vec<f64>,
    /// `â_1 ≥ â_2 ≥ … ≥ 0`, one per retained component.
    pub eigenvalues: Vec<f64>,
    /// Row `k` holds `ψ̂_k` on the grid.
    pub eigenfunctions: DMatrix<f64>,
    /// `S_{ik} = ⟨Xᵢ − X̄, ψ̂_k⟩`.
    pub scores: DMatrix<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Trace of the sample covariance operator.
    pub total_variance: f64,
}

impl FpcBasis {
    /// Number of retained components (`K_max`).
    pub fn k_max(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn eigenfunction(&self, k: usize) -> Vec<f64> {
        self.eigenfunctions.row(k).iter().copied().collect()
    }

    #[inline]
    pub fn score(&self, i: usize, k: usize) -> f64 {
        self.scores[(i, k)]
    }

    /// `Σ_{k ∈ indices} c_k ψ̂_k` evaluated on the grid.
    pub fn combine(&self, indices: &[usize], coefficients: &[f64]) -> Vec<f64> {
        let m = self.grid.len();
        let mut out = vec![0.0; m];
        for (&k, &c) in indices.iter().zip(coefficients) {
            for (j, o) in out.iter_mut().enumerate() {
                *o += c * self.eigenfunctions[(k, j)];
            }
        }
        out
    }

    /// Scores of an arbitrary (uncentered) curve on the retained components.
    pub fn project(&self, curve: &[f64]) -> Result<Vec<f64>> {
        let centered: Vec<f64> = curve.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        (0..self.k_max())
            .map(|k| self.grid.inner_product(&centered, &self.eigenfunction(k)))
            .collect()
    }

    /// Coefficients `⟨f, ψ̂_k⟩` of a curve (no centering).
    pub fn coefficients_of(&self, f: &[f64]) -> Result<Vec<f64>> {
        (0..self.k_max())
            .map(|k| self.grid.inner_product(f, &self.eigenfunction(k)))
            .collect()
    }
}

struct FullDecomposition {
    grid: Grid,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenfunctions: DMatrix<f64>,
    scores: DMatrix<f64>,
    total_variance: f64,
}

fn decompose_all(sample: &FunctionalSample) -> Result<FullDecomposition> {
    let n = sample.n();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "FPC decomposition needs at least 2 curves, got {n}"
        )));
    }
    let raw_scale = sample.values().amax();
    let (centered, mean) = sample.center();
    let grid = centered.grid().clone();
    let m = grid.len();
    let x = centered.values();
    if x.amax() <= 1e-12 * raw_scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(
            "all curves are identical after centering; covariance operator is zero".into(),
        ));
    }

    let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let z = DMatrix::from_fn(n, m, |i, j| x[(i, j)] * sqrt_w[j] * inv_sqrt_n);
    let total_variance = z.norm_squared();

    // Unit right singular vectors of Z with their squared singular values.
    let (values, vectors): (Vec<f64>, Vec<DVector<f64>>) = if n >= m {
        let eig = SymmetricEigen::new(z.transpose() * &z);
        let v = eig.eigenvectors;
        (eig.eigenvalues.iter().copied().collect(), (0..m).map(|k| v.column(k).into_owned()).collect())
    } else {
        let eig = SymmetricEigen::new(&z * z.transpose());
        let u = eig.eigenvectors;
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let vectors = (0..n)
            .map(|k| {
                let v = z.transpose() * u.column(k);
                let norm = v.norm();
                if norm > 0.0 { v / norm } else { v }
            })
            .collect();
        (values, vectors)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let top = values[order[0]];
    let rank = order
        .iter()
        .take_while(|&&k| values[k] > 1e-20 * top && values[k] > EIGEN_CLAMP)
        .count();
    if rank == 0 {
        return Err(Error::Degenerate("covariance operator has no positive eigenvalue".into()));
    }

    let sqrt_n = (n as f64).sqrt();
    let mut eigenvalues = Vec::with_capacity(rank);
    let mut eigenfunctions = DMatrix::zeros(rank, m);
    let mut scores = DMatrix::zeros(n, rank);
    for (k, &src) in order.iter().take(rank).enumerate() {
        let v = &vectors[src];
        let mut psi: Vec<f64> = (0..m).map(|j| v[j] / sqrt_w[j]).collect();
        let projected = &z * v;
        let mut sc: Vec<f64> = projected.iter().map(|p| sqrt_n * p).collect();
        // largest-magnitude entry positive
        let pivot = psi
            .iter()
            .copied()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            psi.iter_mut().for_each(|v| *v = -*v);
            sc.iter_mut().for_each(|v| *v = -*v);
        }
        eigenvalues.push(projected.norm_squared());
        for j in 0..m {
            eigenfunctions[(k, j)] = psi[j];
        }
        for i in 0..n {
            scores[(i, k)] = sc[i];
        }
    }

    Ok(FullDecomposition {
        grid,
        mean,
        eigenvalues,
        eigenfunctions,
        scores,
        total_variance,
    })
}

fn truncate(full: FullDecomposition, k: usize) -> FpcBasis {
    let ratio = full
        .eigenvalues
        .iter()
        .take(k)
        .map(|a| a / full.total_variance)
        .collect();
    FpcBasis {
        grid: full.grid,
        mean: full.mean,
        eigenvalues: full.eigenvalues[..k].to_vec(),
        eigenfunctions: full.eigenfunctions.rows(0, k).into_owned(),
        scores: full.scores.columns(0, k).into_owned(),
        explained_variance_ratio: ratio,
        total_variance: full.total_variance,
    }
}

/// Decomposes the sample and keeps every leading component that explains
/// more than `var_cutoff` of the total variance (at least one).
pub fn fpc_decompose(sample: &FunctionalSample, var_cutoff: f64) -> Result<FpcBasis> {
    if !(var_cutoff > 0.0 && var_cutoff <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "variance cutoff must lie in (0, 1], got {var_cutoff}"
        )));
    }
    let full = decompose_all(sample)?;
    let k = full
        .eigenvalues
        .iter()
        .take_while(|&&a| a / full.total_variance > var_cutoff)
        .count()
        .max(1);
    Ok(truncate(full, k))
}

/// Decomposes the sample and keeps exactly `k` components.
pub fn fpc_decompose_k(sample: &FunctionalSample, k: usize) -> Result<FpcBasis> {
    let full = decompose_all(sample)?;
    if k == 0 || k > full.eigenvalues.len() {
        return Err(Error::InvalidConfig(format!(
            "requested {k} components but the sample has numerical rank {}",
            full.eigenvalues.len()
        )));
    }
    Ok(truncate(full, k))
}
