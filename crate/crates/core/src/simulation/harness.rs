use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate, mse_estimation, CovarianceLaw, DgpConfig};
use crate::error::{Error, Result};
use crate::estimators::{estimate, fit_observance, FitOptions, MarSample, Method, ObservanceModel};
use crate::functional::{fpc_decompose, DEFAULT_VAR_CUTOFF};
use crate::gof::bootstrap_estimate;
use crate::rng::derive_seed;

const FIT_STREAM: u64 = 11;
const TEST_STREAM: u64 = 12;

/// A Monte Carlo design: the cross product of slopes, observance parameters,
/// sample sizes and deviations, each cell replicated `replications` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub betas: Vec<u8>,
    pub etas: Vec<f64>,
    pub ns: Vec<usize>,
    pub deltas: Vec<f64>,
    pub replications: usize,
    /// Bootstrap replicates per test; 0 skips testing.
    pub bootstrap: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub grid_points: usize,
    pub sigma_eps: f64,
    pub var_cutoff: f64,
    pub law: CovarianceLaw,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            betas: vec![1],
            etas: vec![1.0],
            ns: vec![100],
            deltas: vec![0.0],
            replications: 200,
            bootstrap: 500,
            alpha: 0.05,
            methods: Method::ALL.to_vec(),
            seed: 0,
            grid_points: 201,
            sigma_eps: 0.1,
            var_cutoff: DEFAULT_VAR_CUTOFF,
            law: CovarianceLaw::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub beta_id: u8,
    pub eta: f64,
    pub n: usize,
    pub delta: f64,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.betas.is_empty() || self.etas.is_empty() || self.ns.is_empty() || self.deltas.is_empty() {
            return bad("every design axis needs at least one value".into());
        }
        if self.methods.is_empty() {
            return bad("no methods requested".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must be in (0, 1), got {}", self.alpha));
        }
        if !(self.var_cutoff > 0.0 && self.var_cutoff <= 1.0) {
            return bad(format!("var_cutoff must be in (0, 1], got {}", self.var_cutoff));
        }
        for cell in self.cells() {
            self.dgp(&cell, 0).validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &beta_id in &self.betas {
            for &eta in &self.etas {
                for &n in &self.ns {
                    for &delta in &self.deltas {
                        out.push(Cell { beta_id, eta, n, delta });
                    }
                }
            }
        }
        out
    }

    /// Seed of replicate `rep` in `cell`; depends on the cell's values, not
    /// its position in the design.
    pub fn replicate_seed(&self, cell: &Cell, rep: usize) -> u64 {
        derive_seed(
            self.seed,
            &[
                cell.beta_id as u64,
                cell.eta.to_bits(),
                cell.n as u64,
                cell.delta.to_bits(),
                rep as u64,
            ],
        )
    }

    pub fn dgp(&self, cell: &Cell, rep: usize) -> DgpConfig {
        DgpConfig {
            beta_id: cell.beta_id,
            delta: cell.delta,
            eta: Some(cell.eta),
            n: cell.n,
            grid_points: self.grid_points,
            sigma_eps: self.sigma_eps,
            seed: self.replicate_seed(cell, rep),
            law: self.law,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub msee: Option<f64>,
    pub p_value: Option<f64>,
    pub indices: Vec<usize>,
    pub error: Option<String>,
    /// Fit time in seconds; not serialized.
    #[serde(skip)]
    pub seconds: f64,
}

impl MethodOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub k_max: Option<usize>,
    pub missing_fraction: f64,
    pub outcomes: Vec<MethodOutcome>,
}

impl ReplicateRecord {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub successes: usize,
    pub failures: usize,
    /// Share of successful replicates with `p ≤ α` (absent without tests).
    pub rejection_rate: Option<f64>,
    pub mean_msee: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub summaries: Vec<MethodSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

impl CellReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn rejection_rate(&self, method: Method) -> Option<f64> {
        self.summary(method).and_then(|s| s.rejection_rate)
    }

    /// MSEE pairs over the replicates where both methods succeeded.
    pub fn paired_msee(&self, a: Method, b: Method) -> Vec<(f64, f64)> {
        self.replicates
            .iter()
            .filter_map(|r| Some((r.outcome(a)?.msee?, r.outcome(b)?.msee?)))
            .collect()
    }

    pub fn msee(&self, method: Method) -> Vec<f64> {
        self.replicates
            .iter()
            .filter_map(|r| r.outcome(method)?.msee)
            .collect()
    }

    pub fn seconds(&self, method: Method) -> Vec<f64> {
        self.replicates
            .iter()
            .filter_map(|r| r.outcome(method).filter(|o| o.succeeded()).map(|o| o.seconds))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub config: McConfig,
    pub cells: Vec<CellReport>,
}

impl McReport {
    pub fn cell(&self, beta_id: u8, eta: f64, n: usize, delta: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| {
            c.cell.beta_id == beta_id && c.cell.eta == eta && c.cell.n == n && c.cell.delta == delta
        })
    }

    pub fn total_failures(&self) -> usize {
        self.cells
            .iter()
            .flat_map(|c| &c.summaries)
            .map(|s| s.failures)
            .sum()
    }
}

fn failed(method: Method, message: String) -> MethodOutcome {
    MethodOutcome {
        method,
        msee: None,
        p_value: None,
        indices: vec![],
        error: Some(message),
        seconds: 0.0,
    }
}

/// Generates one data set, fits every requested method and, with
/// `bootstrap > 0`, tests each fit.
pub fn run_replicate(config: &McConfig, cell: &Cell, rep: usize) -> ReplicateRecord {
    let dgp = config.dgp(cell, rep);
    let seed = dgp.seed;
    let mut record = ReplicateRecord {
        index: rep,
        seed,
        k_max: None,
        missing_fraction: f64::NAN,
        outcomes: vec![],
    };
    let prepared = (|| -> Result<_> {
        let data = generate(&dgp)?;
        let basis = fpc_decompose(&data.x, config.var_cutoff)?;
        Ok((data, basis))
    })();
    let (data, basis) = match prepared {
        Ok(v) => v,
        Err(e) => {
            record.outcomes = config.methods.iter().map(|&m| failed(m, e.to_string())).collect();
            return record;
        }
    };
    record.k_max = Some(basis.k_max());
    record.missing_fraction = data.missing_fraction();
    let full = MarSample::complete(data.x.clone(), data.y.clone());
    let mar = MarSample::new(data.x.clone(), data.y.clone(), data.observed.clone());

    let mut observance: Option<(Result<ObservanceModel>, Duration)> = None;
    if config.methods.iter().any(|m| m.needs_observance()) {
        if let Ok(s) = &mar {
            let start = Instant::now();
            let model = fit_observance(s);
            observance = Some((model, start.elapsed()));
        }
    }
    let options = FitOptions::with_seed(derive_seed(seed, &[FIT_STREAM]));
    let test_seed = derive_seed(seed, &[TEST_STREAM]);

    record.outcomes = config
        .methods
        .iter()
        .map(|&method| {
            let sample = if method.is_complete() { &full } else { &mar };
            let sample = match sample {
                Ok(s) => s,
                Err(e) => return failed(method, e.to_string()),
            };
            let (model, extra) = match (&observance, method.needs_observance()) {
                (Some((Ok(m), d)), true) => (Some(m), *d),
                (Some((Err(e), _)), true) => return failed(method, e.to_string()),
                _ => (None, Duration::ZERO),
            };
            let start = Instant::now();
            let fit = match estimate(method, sample, &basis, &options, model) {
                Ok(f) => f,
                Err(e) => return failed(method, e.to_string()),
            };
            let seconds = (start.elapsed() + extra).as_secs_f64();
            let msee = match mse_estimation(data.x.grid(), &data.beta, &fit.slope.curve) {
                Ok(v) => v,
                Err(e) => return failed(method, e.to_string()),
            };
            let p_value = if config.bootstrap > 0 {
                match bootstrap_estimate(sample, &basis, &fit, config.bootstrap, test_seed) {
                    Ok(r) => Some(r.p_value),
                    Err(e) => return failed(method, e.to_string()),
                }
            } else {
                None
            };
            MethodOutcome {
                method,
                msee: Some(msee),
                p_value,
                indices: fit.slope.indices.clone(),
                error: None,
                seconds,
            }
        })
        .collect();
    record
}

fn summarize(config: &McConfig, replicates: &[ReplicateRecord]) -> Vec<MethodSummary> {
    config
        .methods
        .iter()
        .map(|&method| {
            let outcomes: Vec<&MethodOutcome> = replicates.iter().filter_map(|r| r.outcome(method)).collect();
            let ok: Vec<&&MethodOutcome> = outcomes.iter().filter(|o| o.succeeded()).collect();
            let successes = ok.len();
            let rejection_rate = if config.bootstrap > 0 && successes > 0 {
                let rejected = ok
                    .iter()
                    .filter(|o| o.p_value.is_some_and(|p| p <= config.alpha))
                    .count();
                Some(rejected as f64 / successes as f64)
            } else {
                None
            };
            let mean_msee = (successes > 0)
                .then(|| ok.iter().filter_map(|o| o.msee).sum::<f64>() / successes as f64);
            MethodSummary {
                method,
                successes,
                failures: outcomes.len() - successes,
                rejection_rate,
                mean_msee,
            }
        })
        .collect()
}

/// Runs every cell of the design. Replicates run in parallel and are
/// collected in index order, so the report depends only on the config.
pub fn mc_experiment(config: &McConfig) -> Result<McReport> {
    mc_experiment_with_progress(config, |_, _| {})
}

/// As [`mc_experiment`], calling `progress(cell_index, cell_count)` after
/// each finished cell.
pub fn mc_experiment_with_progress(
    config: &McConfig,
    mut progress: impl FnMut(usize, usize),
) -> Result<McReport> {
    config.validate()?;
    let cells = config.cells();
    let total = cells.len();
    let mut reports = Vec::with_capacity(total);
    for (ci, cell) in cells.into_iter().enumerate() {
        let replicates: Vec<ReplicateRecord> = (0..config.replications)
            .into_par_iter()
            .map(|rep| run_replicate(config, &cell, rep))
            .collect();
        reports.push(CellReport {
            cell,
            summaries: summarize(config, &replicates),
            replicates,
        });
        progress(ci + 1, total);
    }
    Ok(McReport {
        config: config.clone(),
        cells: reports,
    })
}
