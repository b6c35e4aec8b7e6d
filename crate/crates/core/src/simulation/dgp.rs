use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{FunctionalSample, Grid};
use crate::rng::{rng_from, Rng};

const CURVE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const MISSING_STREAM: u64 = 3;

/// Covariance of the zero-mean Ornstein–Uhlenbeck covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceLaw {
    /// Stationary process, `Cov(s, t) = 1.5 exp(−|s − t|/3)`.
    #[default]
    StationaryOu,
    /// Process started at zero, `Cov(s, t) = 1.5 (exp(2 min(s, t)/3) − 1)`.
    Printed,
}

impl CovarianceLaw {
    pub fn covariance(self, s: f64, t: f64) -> f64 {
        match self {
            CovarianceLaw::StationaryOu => 1.5 * (-(s - t).abs() / 3.0).exp(),
            CovarianceLaw::Printed => 1.5 * ((2.0 / 3.0 * s.min(t)).exp() - 1.0),
        }
    }
}

/// Gaussian path generator with a cached factor `L = QΛ^{1/2}` of the grid
/// covariance matrix (negative eigenvalues clamped to zero).
#[derive(Debug)]
pub struct OuGenerator {
    grid: Grid,
    law: CovarianceLaw,
    factor: DMatrix<f64>,
}

type CacheKey = (Vec<u64>, CovarianceLaw);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<OuGenerator>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<OuGenerator>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl OuGenerator {
    pub fn new(grid: Grid, law: CovarianceLaw) -> Self {
        let t = grid.points();
        let m = t.len();
        let cov = DMatrix::from_fn(m, m, |i, j| law.covariance(t[i], t[j]));
        let eig = cov.symmetric_eigen();
        let mut factor = eig.eigenvectors;
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            let s = lam.max(0.0).sqrt();
            factor.column_mut(k).scale_mut(s);
        }
        Self { grid, law, factor }
    }

    /// Shared generator for `(grid, law)`, built on first use.
    pub fn cached(grid: &Grid, law: CovarianceLaw) -> Arc<OuGenerator> {
        let key = (grid.points().iter().map(|v| v.to_bits()).collect(), law);
        let mut map = cache().lock().unwrap_or_else(|e| e.into_inner());
        map.entry(key)
            .or_insert_with(|| Arc::new(OuGenerator::new(grid.clone(), law)))
            .clone()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn law(&self) -> CovarianceLaw {
        self.law
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<FunctionalSample> {
        let m = self.grid.len();
        let z = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let paths = (&self.factor * z).transpose();
        FunctionalSample::new(self.grid.clone(), paths)
    }
}

/// `n` independent OU paths on `grid` under the default covariance law.
pub fn gen_ou_sample(n: usize, grid: &Grid, seed: u64) -> Result<FunctionalSample> {
    gen_ou_sample_with(n, grid, CovarianceLaw::default(), seed)
}

pub fn gen_ou_sample_with(n: usize, grid: &Grid, law: CovarianceLaw, seed: u64) -> Result<FunctionalSample> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample size must be positive".into()));
    }
    OuGenerator::cached(grid, law).sample(n, &mut rng_from(seed, &[CURVE_STREAM]))
}

/// The benchmark slopes `β₁ = sin 2πt − cos 2πt`, `β₂ = t − (t − 0.75)²`,
/// `β₃ = t + cos 2πt`.
pub fn beta_curve(beta_id: u8, grid: &Grid) -> Result<Vec<f64>> {
    let f: fn(f64) -> f64 = match beta_id {
        1 => |t| (2.0 * PI * t).sin() - (2.0 * PI * t).cos(),
        2 => |t| t - (t - 0.75).powi(2),
        3 => |t| t + (2.0 * PI * t).cos(),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "unknown slope id {beta_id} (expected 1, 2 or 3)"
            )))
        }
    };
    Ok(grid.evaluate(f))
}

/// `yᵢ = ⟨Xᵢ, β⟩ + δ‖Xᵢ‖² + σ εᵢ` with standard normal `εᵢ`.
pub fn gen_responses(x: &FunctionalSample, beta_id: u8, delta: f64, sigma_eps: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma_eps >= 0.0 && sigma_eps.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise level must be nonnegative, got {sigma_eps}")));
    }
    let beta = beta_curve(beta_id, x.grid())?;
    let linear = x.inner_products(&beta)?;
    let norms = x.squared_norms();
    let mut rng = rng_from(seed, &[NOISE_STREAM]);
    Ok(linear
        .iter()
        .zip(&norms)
        .map(|(l, q)| {
            let e: f64 = rng.sample(StandardNormal);
            l + delta * q + sigma_eps * e
        })
        .collect())
}

/// `p(X) = 1 / (1 + exp(−η‖X‖²))`.
pub fn observance_probability(x: &FunctionalSample, eta: f64) -> Vec<f64> {
    x.squared_norms()
        .into_iter()
        .map(|q| 1.0 / (1.0 + (-eta * q).exp()))
        .collect()
}

/// Independent indicators `Rᵢ ~ Bernoulli(p(Xᵢ))`.
pub fn gen_missing(x: &FunctionalSample, eta: f64, seed: u64) -> Result<Vec<bool>> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidConfig(format!("eta must be positive, got {eta}")));
    }
    let mut rng = rng_from(seed, &[MISSING_STREAM]);
    Ok(observance_probability(x, eta)
        .into_iter()
        .map(|p| rng.random::<f64>() < p)
        .collect())
}

/// Trapezoid `‖β − β̂‖²`.
pub fn mse_estimation(grid: &Grid, beta: &[f64], estimate: &[f64]) -> Result<f64> {
    grid.distance_sq(beta, estimate)
}

/// One synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub beta_id: u8,
    pub delta: f64,
    /// Observance parameter; `None` leaves every response observed.
    pub eta: Option<f64>,
    pub n: usize,
    pub grid_points: usize,
    pub sigma_eps: f64,
    pub seed: u64,
    #[serde(default)]
    pub law: CovarianceLaw,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            beta_id: 1,
            delta: 0.0,
            eta: Some(1.0),
            n: 100,
            grid_points: 201,
            sigma_eps: 0.1,
            seed: 0,
            law: CovarianceLaw::default(),
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.beta_id) {
            return Err(Error::InvalidConfig(format!("unknown slope id {}", self.beta_id)));
        }
        if self.n < 10 {
            return Err(Error::InvalidConfig(format!("n must be at least 10, got {}", self.n)));
        }
        if self.grid_points < 3 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 3 points, got {}",
                self.grid_points
            )));
        }
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma_eps must be nonnegative, got {}", self.sigma_eps)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be nonnegative, got {}", self.delta)));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidConfig(format!("eta must be positive, got {eta}")));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::uniform(0.0, 1.0, self.grid_points)
    }
}

/// Curves, complete responses and observance pattern of one draw.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub x: FunctionalSample,
    /// Every response, including the ones marked missing.
    pub y: Vec<f64>,
    pub observed: Vec<bool>,
    pub beta: Vec<f64>,
    /// True observance probabilities (all 1 without missingness).
    pub probabilities: Vec<f64>,
}

impl SimulatedData {
    pub fn missing_fraction(&self) -> f64 {
        self.observed.iter().filter(|&&o| !o).count() as f64 / self.observed.len() as f64
    }
}

pub fn generate(config: &DgpConfig) -> Result<SimulatedData> {
    config.validate()?;
    let grid = config.grid()?;
    let x = gen_ou_sample_with(config.n, &grid, config.law, config.seed)?;
    let y = gen_responses(&x, config.beta_id, config.delta, config.sigma_eps, config.seed)?;
    let (observed, probabilities) = match config.eta {
        Some(eta) => (gen_missing(&x, eta, config.seed)?, observance_probability(&x, eta)),
        None => (vec![true; config.n], vec![1.0; config.n]),
    };
    Ok(SimulatedData {
        beta: beta_curve(config.beta_id, &grid)?,
        x,
        y,
        observed,
        probabilities,
    })
}
