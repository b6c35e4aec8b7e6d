//! Discretized L² primitives on an equidistant grid.
//!
//! Curves are stored as rows of an `n × m` matrix evaluated on a shared
//! [`Grid`]. All integrals use the composite trapezoid rule, so the inner
//! product is a fixed-weight dot product `Σ_j w_j f_j g_j`.

mod fpc;

pub use fpc::{fpc_decompose, fpc_decompose_k, FpcBasis, DEFAULT_VAR_CUTOFF};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EQUIDISTANT_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    spacing: f64,
}

impl Grid {
    /// Builds a grid from strictly increasing, equidistant abscissae.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("abscissae must be finite".into()));
        }
        let m = points.len();
        let spacing = (points[m - 1] - points[0]) / (m - 1) as f64;
        if spacing <= 0.0 {
            return Err(Error::InvalidGrid("abscissae must be increasing".into()));
        }
        for (j, w) in points.windows(2).enumerate() {
            let d = w[1] - w[0];
            if d <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "abscissae not strictly increasing at index {}",
                    j + 1
                )));
            }
            if ((d - spacing) / spacing).abs() > EQUIDISTANT_RTOL {
                return Err(Error::InvalidGrid(format!(
                    "abscissae not equidistant at index {} (step {d}, expected {spacing})",
                    j + 1
                )));
            }
        }
        Ok(Self { points, spacing })
    }

    /// `m` equidistant points covering `[a, b]`.
    pub fn uniform(a: f64, b: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {m}")));
        }
        let h = (b - a) / (m - 1) as f64;
        let mut pts: Vec<f64> = (0..m).map(|j| a + h * j as f64).collect();
        pts[m - 1] = b;
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Trapezoid weight of grid node `j`.
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.points.len() {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.weight(j)).collect()
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::Dimension(format!(
                "curve has {} values but grid has {} points",
                f.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Trapezoid approximation of `∫ f g`.
    pub fn inner_product(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(self.dot_unchecked(f, g))
    }

    #[inline]
    pub(crate) fn dot_unchecked(&self, f: &[f64], g: &[f64]) -> f64 {
        let m = f.len();
        let interior: f64 = f[1..m - 1]
            .iter()
            .zip(&g[1..m - 1])
            .map(|(a, b)| a * b)
            .sum();
        self.spacing * (interior + 0.5 * (f[0] * g[0] + f[m - 1] * g[m - 1]))
    }

    pub fn norm(&self, f: &[f64]) -> Result<f64> {
        Ok(self.inner_product(f, f)?.max(0.0).sqrt())
    }

    /// Squared L² distance between two curves.
    pub fn distance_sq(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        let diff: Vec<f64> = f.iter().zip(g).map(|(a, b)| a - b).collect();
        Ok(self.dot_unchecked(&diff, &diff).max(0.0))
    }

    pub fn evaluate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|&t| f(t)).collect()
    }
}

/// `n` curves discretized on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: Grid,
    values: DMatrix<f64>,
    centered: bool,
}

impl FunctionalSample {
    pub fn new(grid: Grid, values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(Error::Dimension(format!(
                "curve matrix has {} columns but grid has {} points",
                values.ncols(),
                grid.len()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::Dimension("sample has no curves".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            // column-major storage
            let (i, j) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::NonFinite(format!("curve {i} at grid node {j}")));
        }
        Ok(Self {
            grid,
            values,
            centered: false,
        })
    }

    pub fn from_rows(grid: Grid, rows: &[Vec<f64>]) -> Result<Self> {
        let m = grid.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::Dimension(format!(
                "curve {i} has {} values but grid has {m} points",
                r.len()
            )));
        }
        let values = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn curve(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn curves(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.curve(i)).collect()
    }

    pub fn mean_curve(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.values
            .column_iter()
            .map(|c| c.iter().sum::<f64>() / n)
            .collect()
    }

    /// Removes the pointwise mean. Idempotent: an already centered sample is
    /// returned unchanged together with a zero mean.
    pub fn center(&self) -> (FunctionalSample, Vec<f64>) {
        if self.centered {
            return (self.clone(), vec![0.0; self.grid.len()]);
        }
        let mean = self.mean_curve();
        let mut values = self.values.clone();
        for (j, mut col) in values.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        (
            FunctionalSample {
                grid: self.grid.clone(),
                values,
                centered: true,
            },
            mean,
        )
    }

    /// Squared L² norm of every curve.
    pub fn squared_norms(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let c = self.curve(i);
                self.grid.dot_unchecked(&c, &c)
            })
            .collect()
    }

    /// Inner product of every curve with `f`.
    pub fn inner_products(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.grid.check(f)?;
        Ok((0..self.n())
            .map(|i| self.grid.dot_unchecked(&self.curve(i), f))
            .collect())
    }

    /// Keeps the curves at `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<FunctionalSample> {
        let values = self.values.select_rows(rows);
        FunctionalSample::new(self.grid.clone(), values)
    }
}
