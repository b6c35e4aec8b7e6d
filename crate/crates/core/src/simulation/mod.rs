//! Synthetic data and the Monte Carlo harness: Ornstein–Uhlenbeck
//! covariates, three benchmark slopes, a logistic missingness mechanism in
//! `‖X‖²`, and quadratic deviations `δ‖X‖²` from linearity.

mod dgp;
mod harness;

pub use dgp::{
    beta_curve, gen_missing, gen_ou_sample, gen_ou_sample_with, gen_responses, generate,
    mse_estimation, observance_probability, CovarianceLaw, DgpConfig, OuGenerator, SimulatedData,
};
pub use harness::{
    mc_experiment, mc_experiment_with_progress, run_replicate, Cell, CellReport, McConfig,
    McReport, MethodOutcome, MethodSummary, ReplicateRecord,
};
