//! Scalar-on-function linear regression with responses missing at random,
//! and a projected Cramér–von Mises test of linearity calibrated by wild
//! bootstrap.
//!
//! The crate is organised bottom-up:
//!
//! - [`functional`]: grids, trapezoid inner products, centering and the
//!   functional principal component (FPC) decomposition.
//! - [`estimators`]: the simplified, imputed and inverse-probability-weighted
//!   slope estimators, each with cross-validated or LASSO-selected FPCs.
//! - [`gof`]: residuals, the closed-form projected Cramér–von Mises
//!   statistic and its wild-bootstrap calibration.
//! - [`simulation`]: Ornstein–Uhlenbeck covariates, the benchmark slopes,
//!   the missingness mechanism and the Monte Carlo harness.
//! - [`io`]: CSV formats for curves and partially observed responses.

pub mod error;
pub mod estimators;
pub mod functional;
pub mod gof;
pub mod io;
pub mod rng;
pub mod simulation;

pub use error::{Error, ErrorKind, Result};
pub use estimators::{Estimate, FitOptions, FitPlan, FunctionalSlope, MarSample, Method};
pub use functional::{FpcBasis, FunctionalSample, Grid};
pub use gof::GofResult;
