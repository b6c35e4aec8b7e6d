use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::functional::FpcBasis;

/// `b̂_k = (divisor · â_k)⁻¹ Σ_{i∈rows} yᵢ Ŝ_{ik}` for each `k` in `indices`.
///
/// `y` is indexed by curve position, so only `y[i]` for `i` in `rows` is read.
/// Over the full sample with centered `y` this is the least-squares solution;
/// over a strict subsample it is not, since the scores are only orthogonal
/// over the full sample (see [`least_squares_fpc`]).
pub fn ols_fpc_coefficients(
    basis: &FpcBasis,
    y: &[f64],
    indices: &[usize],
    rows: &[usize],
    divisor: f64,
) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::Degenerate("empty row set".into()));
    }
    if !(divisor > 0.0) {
        return Err(Error::InvalidConfig(format!("divisor must be positive, got {divisor}")));
    }
    check_len(basis, y)?;
    indices
        .iter()
        .map(|&k| {
            let a = eigenvalue(basis, k)?;
            let s: f64 = rows.iter().map(|&i| y[i] * basis.score(i, k)).sum();
            Ok(s / (divisor * a))
        })
        .collect()
}

fn check_len(basis: &FpcBasis, y: &[f64]) -> Result<()> {
    if y.len() != basis.n() {
        return Err(Error::Dimension(format!(
            "{} responses for {} curves",
            y.len(),
            basis.n()
        )));
    }
    Ok(())
}

fn eigenvalue(basis: &FpcBasis, k: usize) -> Result<f64> {
    let a = *basis
        .eigenvalues
        .get(k)
        .ok_or_else(|| Error::Dimension(format!("component {k} beyond K_max = {}", basis.k_max())))?;
    if a <= 0.0 {
        return Err(Error::Singular(format!("eigenvalue {k} is zero")));
    }
    Ok(a)
}

/// Least-squares fit `yᵢ ≈ α + Σ_k b_k Ŝ_{ik}` over `rows`, returning
/// `(α, b)`. On the full sample the scores are centered and orthogonal, so
/// `b` equals [`ols_fpc_coefficients`] with divisor `n` and `α` is the mean
/// response; on a subsample this is the exact refit.
pub fn least_squares_fpc(
    basis: &FpcBasis,
    y: &[f64],
    indices: &[usize],
    rows: &[usize],
) -> Result<(f64, Vec<f64>)> {
    check_len(basis, y)?;
    for &k in indices {
        eigenvalue(basis, k)?;
    }
    if rows.len() <= indices.len() {
        return Err(Error::Singular(format!(
            "{} rows for an intercept and {} components",
            rows.len(),
            indices.len()
        )));
    }
    let mut m = Moments::new(indices.len());
    let mut sy = 0.0;
    let mut ssy = vec![0.0; indices.len()];
    let mut s = vec![0.0; indices.len()];
    for &i in rows {
        for (c, &k) in indices.iter().enumerate() {
            s[c] = basis.score(i, k);
            ssy[c] += s[c] * y[i];
        }
        sy += y[i];
        m.add(&s);
    }
    let factor = m.factor()?;
    let rhs = m.centered_rhs(sy, &ssy);
    let b = factor.solve(&rhs, indices.len());
    let alpha = sy / m.count - b.iter().zip(&factor.mean).map(|(b, s)| b * s).sum::<f64>();
    Ok((alpha, b))
}

/// Running sums of score vectors over a row set.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub count: f64,
    pub sum: Vec<f64>,
    pub cross: DMatrix<f64>,
}

impl Moments {
    pub fn new(k: usize) -> Self {
        Self {
            count: 0.0,
            sum: vec![0.0; k],
            cross: DMatrix::zeros(k, k),
        }
    }

    pub fn over(basis: &FpcBasis, rows: &[usize], k: usize) -> Self {
        let mut m = Self::new(k);
        let mut s = vec![0.0; k];
        for &i in rows {
            for (c, v) in s.iter_mut().enumerate() {
                *v = basis.score(i, c);
            }
            m.add(&s);
        }
        m
    }

    pub fn add(&mut self, s: &[f64]) {
        self.update(s, 1.0);
    }

    pub fn remove(&mut self, s: &[f64]) {
        self.update(s, -1.0);
    }

    fn update(&mut self, s: &[f64], sign: f64) {
        self.count += sign;
        let k = s.len();
        for a in 0..k {
            self.sum[a] += sign * s[a];
            for b in 0..k {
                self.cross[(a, b)] += sign * s[a] * s[b];
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|v| v / self.count).collect()
    }

    /// `Σ (s − s̄)(y − ȳ)` from `Σ y` and `Σ s y`.
    pub fn centered_rhs(&self, sum_y: f64, sum_sy: &[f64]) -> Vec<f64> {
        sum_sy
            .iter()
            .zip(&self.sum)
            .map(|(sy, s)| sy - s * sum_y / self.count)
            .collect()
    }

    /// Cholesky factor of the centered Gram matrix `Σ (s − s̄)(s − s̄)ᵀ`.
    pub fn factor(&self) -> Result<Factor> {
        let k = self.sum.len();
        let gram = DMatrix::from_fn(k, k, |a, b| {
            self.cross[(a, b)] - self.sum[a] * self.sum[b] / self.count
        });
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Singular("score Gram matrix is not positive definite".into()))?;
        Ok(Factor {
            l: chol.l(),
            mean: self.mean(),
        })
    }
}

/// Lower Cholesky factor of a centered Gram matrix. The leading `K × K`
/// block factors the Gram matrix of the first `K` columns, so every prefix
/// least-squares problem is solved from one factorization.
pub(crate) struct Factor {
    pub l: DMatrix<f64>,
    pub mean: Vec<f64>,
}

impl Factor {
    fn forward(&self, rhs: &[f64]) -> Vec<f64> {
        let k = rhs.len();
        let mut z = vec![0.0; k];
        for a in 0..k {
            let s: f64 = (0..a).map(|b| self.l[(a, b)] * z[b]).sum();
            z[a] = (rhs[a] - s) / self.l[(a, a)];
        }
        z
    }

    fn backward(&self, z: &[f64], k: usize) -> Vec<f64> {
        let mut b = vec![0.0; k];
        for a in (0..k).rev() {
            let s: f64 = ((a + 1)..k).map(|c| self.l[(c, a)] * b[c]).sum();
            b[a] = (z[a] - s) / self.l[(a, a)];
        }
        b
    }

    /// Coefficients using the first `k` columns.
    pub fn solve(&self, rhs: &[f64], k: usize) -> Vec<f64> {
        let z = self.forward(&rhs[..k]);
        self.backward(&z, k)
    }

    /// Coefficients for every prefix `1..=K`.
    pub fn prefix_solutions(&self, rhs: &[f64]) -> Vec<Vec<f64>> {
        let z = self.forward(rhs);
        (1..=rhs.len()).map(|k| self.backward(&z, k)).collect()
    }
}
