//! Slope estimators for the functional linear model when some responses are
//! missing at random.
//!
//! Every estimator regresses responses on the FPC scores of the full
//! covariate sample, with an intercept: on the observed pairs only
//! (simplified), on responses completed by a first-stage simplified fit
//! (imputed), or on responses completed with inverse-probability weights
//! (IPW). Over the full sample the scores are centered and orthogonal, so the
//! fit reduces to `b̂_k = (n â_k)⁻¹ Σ Yᵢ Ŝ_{ik}` with the mean response as
//! intercept. The FPC index set comes from leave-one-out CV over cutoffs or
//! from a LASSO path with the one-standard-error rule.

mod cv;
mod lasso;
mod methods;
mod observance;
mod ols;

pub use cv::{joint_loocv_cutoffs, loocv_cutoff_simplified, CutoffSelection, JointCutoffSelection};
pub use lasso::{
    coordinate_descent, kkt_violation, lambda_grid, lambda_max, lasso_path, lasso_select,
    LassoPath, LassoSelection, DEFAULT_FOLDS, DEFAULT_LAMBDA_COUNT, DEFAULT_LAMBDA_RATIO,
};
pub use methods::{
    estimate, estimate_complete, estimate_complete_lasso, estimate_imputed,
    estimate_imputed_lasso, estimate_ipw, estimate_ipw_lasso, estimate_simplified,
    estimate_simplified_lasso,
};
pub use observance::{
    fit_observance, fit_observance_with_bandwidth, pairwise_distances, ObservanceModel,
    BANDWIDTH_MULTIPLIERS, PROBABILITY_FLOOR,
};
pub use ols::{least_squares_fpc, ols_fpc_coefficients};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{FpcBasis, FunctionalSample};

/// The eight slope estimators: two complete-data benchmarks and six
/// MAR-adapted estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    C,
    CL,
    S,
    SL,
    I,
    IL,
    W,
    WL,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::C,
        Method::CL,
        Method::S,
        Method::SL,
        Method::I,
        Method::IL,
        Method::W,
        Method::WL,
    ];

    pub const MAR: [Method; 6] = [
        Method::S,
        Method::SL,
        Method::I,
        Method::IL,
        Method::W,
        Method::WL,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::C => "C",
            Method::CL => "CL",
            Method::S => "S",
            Method::SL => "SL",
            Method::I => "I",
            Method::IL => "IL",
            Method::W => "W",
            Method::WL => "WL",
        }
    }

    pub fn is_lasso(self) -> bool {
        matches!(self, Method::CL | Method::SL | Method::IL | Method::WL)
    }

    /// Complete-data benchmark that needs every response.
    pub fn is_complete(self) -> bool {
        matches!(self, Method::C | Method::CL)
    }

    pub fn needs_observance(self) -> bool {
        matches!(self, Method::W | Method::WL)
    }

    fn stage(self) -> Stage {
        match self {
            Method::C | Method::CL | Method::S | Method::SL => Stage::Single,
            Method::I | Method::IL => Stage::Imputed,
            Method::W | Method::WL => Stage::Weighted,
        }
    }

    pub fn index(self) -> usize {
        Method::ALL.iter().position(|m| *m == self).unwrap()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown method '{s}' (expected one of C, CL, S, SL, I, IL, W, WL)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Single,
    Imputed,
    Weighted,
}

/// Curves, responses and observance indicators `(Xᵢ, Yᵢ, Rᵢ)`.
#[derive(Debug, Clone)]
pub struct MarSample {
    x: FunctionalSample,
    y: Vec<f64>,
    observed: Vec<bool>,
    observed_index: Vec<usize>,
}

impl MarSample {
    /// Responses at unobserved positions are ignored and stored as NaN.
    pub fn new(x: FunctionalSample, y: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        let n = x.n();
        if y.len() != n || observed.len() != n {
            return Err(Error::Dimension(format!(
                "{n} curves but {} responses and {} indicators",
                y.len(),
                observed.len()
            )));
        }
        let observed_index: Vec<usize> = (0..n).filter(|&i| observed[i]).collect();
        if observed_index.len() < 2 {
            return Err(Error::Degenerate(format!(
                "need at least 2 observed responses, got {}",
                observed_index.len()
            )));
        }
        if let Some(&i) = observed_index.iter().find(|&&i| !y[i].is_finite()) {
            return Err(Error::NonFinite(format!("observed response {i} is {}", y[i])));
        }
        let y = y
            .into_iter()
            .zip(&observed)
            .map(|(v, &o)| if o { v } else { f64::NAN })
            .collect();
        Ok(Self {
            x,
            y,
            observed,
            observed_index,
        })
    }

    pub fn complete(x: FunctionalSample, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(x, y, vec![true; n])
    }

    pub fn x(&self) -> &FunctionalSample {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn observed_index(&self) -> &[usize] {
        &self.observed_index
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_obs(&self) -> usize {
        self.observed_index.len()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.n_obs() == self.n()
    }

    /// Same curves and pattern, new responses at the observed positions.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y, self.observed.clone())
    }
}

/// An estimated slope `β̂ = Σ_{k∈𝓚} b̂_k ψ̂_k` plus intercept.
///
/// `indices` are zero-based FPC positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSlope {
    pub method: Method,
    pub indices: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub curve: Vec<f64>,
}

impl FunctionalSlope {
    fn from_coefficients(
        method: Method,
        basis: &FpcBasis,
        indices: Vec<usize>,
        coefficients: Vec<f64>,
        intercept: f64,
    ) -> Self {
        let curve = basis.combine(&indices, &coefficients);
        Self {
            method,
            indices,
            coefficients,
            intercept,
            curve,
        }
    }

    /// Fitted values for every curve of the basis sample, via the scores.
    pub fn predict(&self, basis: &FpcBasis) -> Vec<f64> {
        (0..basis.n()).map(|i| self.predict_row(basis, i)).collect()
    }

    #[inline]
    pub fn predict_row(&self, basis: &FpcBasis, i: usize) -> f64 {
        self.intercept
            + self
                .indices
                .iter()
                .zip(&self.coefficients)
                .map(|(&k, &b)| b * basis.score(i, k))
                .sum::<f64>()
    }

    /// Fitted values `intercept + ⟨Xᵢ − X̄, β̂⟩` computed by quadrature.
    pub fn predict_curves(&self, x: &FunctionalSample, basis: &FpcBasis) -> Result<Vec<f64>> {
        let offset = basis.grid.inner_product(&basis.mean, &self.curve)?;
        Ok(x.inner_products(&self.curve)?
            .into_iter()
            .map(|v| self.intercept + v - offset)
            .collect())
    }

    /// Full coefficient vector of length `k_max` with zeros off the index set.
    pub fn dense_coefficients(&self, k_max: usize) -> Vec<f64> {
        let mut out = vec![0.0; k_max];
        for (&k, &b) in self.indices.iter().zip(&self.coefficients) {
            out[k] = b;
        }
        out
    }
}

/// The frozen choices of a fit: everything needed to recompute the slope for
/// new responses without reselecting components or probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPlan {
    pub method: Method,
    /// Index set of the simplified first stage (imputed and IPW methods).
    pub first_stage: Option<Vec<usize>>,
    pub indices: Vec<usize>,
    /// Estimated observance probabilities `p̂(Xᵢ)` (IPW methods).
    pub probabilities: Option<Vec<f64>>,
}

impl FitPlan {
    /// Recomputes the slope for responses `y` under the observance pattern
    /// `observed`, holding index sets and probabilities fixed.
    pub fn refit(&self, basis: &FpcBasis, y: &[f64], observed: &[bool]) -> Result<FunctionalSlope> {
        let n = basis.n();
        if y.len() != n || observed.len() != n {
            return Err(Error::Dimension(format!(
                "basis has {n} curves but {} responses and {} indicators",
                y.len(),
                observed.len()
            )));
        }
        let rows: Vec<usize> = (0..n).filter(|&i| observed[i]).collect();
        if self.method.is_complete() && rows.len() != n {
            return Err(Error::InvalidConfig(format!(
                "method {} needs every response observed ({} of {n} are)",
                self.method,
                rows.len()
            )));
        }
        if let Some(&i) = rows.iter().find(|&&i| !y[i].is_finite()) {
            return Err(Error::NonFinite(format!("observed response {i} is {}", y[i])));
        }
        let (intercept, coefficients) = match self.method.stage() {
            Stage::Single => least_squares_fpc(basis, y, &self.indices, &rows)?,
            Stage::Imputed | Stage::Weighted => {
                let first = self.first_stage.as_ref().ok_or_else(|| {
                    Error::InvalidConfig(format!("method {} needs a first-stage index set", self.method))
                })?;
                let (a1, b1) = least_squares_fpc(basis, y, first, &rows)?;
                let completed = match self.method.stage() {
                    Stage::Imputed => complete_imputed(basis, y, observed, first, a1, &b1),
                    _ => {
                        let p = self.probabilities.as_ref().ok_or_else(|| {
                            Error::InvalidConfig(format!("method {} needs probabilities", self.method))
                        })?;
                        complete_weighted(basis, y, observed, first, a1, &b1, p)
                    }
                };
                let all: Vec<usize> = (0..n).collect();
                least_squares_fpc(basis, &completed, &self.indices, &all)?
            }
        };
        Ok(FunctionalSlope::from_coefficients(
            self.method,
            basis,
            self.indices.clone(),
            coefficients,
            intercept,
        ))
    }
}

/// Which selection produced the index sets, with the CV traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    Cutoff(CutoffSelection),
    JointCutoff(JointCutoffSelection),
    Lasso {
        first: Option<LassoSelection>,
        second: LassoSelection,
    },
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub slope: FunctionalSlope,
    pub plan: FitPlan,
    pub selection: Selection,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Seed for the LASSO fold assignment.
    pub seed: u64,
    pub folds: usize,
    pub lambda_count: usize,
    pub lambda_ratio: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            folds: DEFAULT_FOLDS,
            lambda_count: DEFAULT_LAMBDA_COUNT,
            lambda_ratio: DEFAULT_LAMBDA_RATIO,
        }
    }
}

impl FitOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[inline]
pub(crate) fn score_prediction(basis: &FpcBasis, i: usize, indices: &[usize], b: &[f64]) -> f64 {
    indices.iter().zip(b).map(|(&k, &c)| c * basis.score(i, k)).sum()
}

/// `Y_{i,S} = Rᵢ Yᵢ + (1 − Rᵢ)(α̂ + ⟨Xᵢ − X̄, β̂⟩)`.
pub(crate) fn complete_imputed(
    basis: &FpcBasis,
    y: &[f64],
    observed: &[bool],
    indices: &[usize],
    intercept: f64,
    b: &[f64],
) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            if observed[i] {
                y[i]
            } else {
                intercept + score_prediction(basis, i, indices, b)
            }
        })
        .collect()
}

/// `Y_{i,W} = (Rᵢ/p̂ᵢ) Yᵢ + (1 − Rᵢ/p̂ᵢ)(α̂ + ⟨Xᵢ − X̄, β̂⟩)`.
pub(crate) fn complete_weighted(
    basis: &FpcBasis,
    y: &[f64],
    observed: &[bool],
    indices: &[usize],
    intercept: f64,
    b: &[f64],
    p: &[f64],
) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let pred = intercept + score_prediction(basis, i, indices, b);
            if observed[i] {
                let w = 1.0 / p[i];
                w * y[i] + (1.0 - w) * pred
            } else {
                pred
            }
        })
        .collect()
}

/// Completed responses `Y_{i,S}`: observed entries kept, missing ones
/// replaced by the slope's predictions.
pub fn impute_responses(sample: &MarSample, basis: &FpcBasis, slope: &FunctionalSlope) -> Vec<f64> {
    (0..sample.n())
        .map(|i| {
            if sample.observed()[i] {
                sample.y()[i]
            } else {
                slope.predict_row(basis, i)
            }
        })
        .collect()
}

/// Completed responses `Y_{i,W}` with inverse-probability weights.
pub fn ipw_responses(
    sample: &MarSample,
    basis: &FpcBasis,
    slope: &FunctionalSlope,
    probabilities: &[f64],
) -> Vec<f64> {
    (0..sample.n())
        .map(|i| {
            let pred = slope.predict_row(basis, i);
            if sample.observed()[i] {
                let w = 1.0 / probabilities[i];
                w * sample.y()[i] + (1.0 - w) * pred
            } else {
                pred
            }
        })
        .collect()
}
