//! The subcommands. Each takes a fully resolved configuration, which is also
//! what the manifest records, so a manifest can be replayed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use marflm::estimators::{estimate, FitOptions, Selection};
use marflm::functional::{fpc_decompose, FpcBasis};
use marflm::gof::bootstrap_estimate;
use marflm::io::{read_curves_path, read_responses_path, write_curves, write_responses};
use marflm::simulation::{generate, mc_experiment_with_progress, CovarianceLaw, DgpConfig, McConfig, McReport};
use marflm::{Error, MarSample, Method, Result};
use serde::{Deserialize, Serialize};

use crate::output::{digest_file, InputDigest, OutDir};
use crate::plot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRun {
    pub dgp: DgpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataInputs {
    pub curves: PathBuf,
    pub responses: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRun {
    pub inputs: DataInputs,
    pub method: Method,
    pub seed: u64,
    pub var_cutoff: f64,
    pub plot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRun {
    pub inputs: DataInputs,
    pub method: Method,
    pub bootstrap: usize,
    pub seed: u64,
    pub alpha: f64,
    pub var_cutoff: f64,
    pub plot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    pub config: McConfig,
    /// Also write wall-time tables and plots (not reproducible).
    pub timing: bool,
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "snake_case")]
pub enum Run {
    Simulate(SimulateRun),
    Fit(FitRun),
    Test(TestRun),
    Mc(McRun),
}

impl Run {
    pub fn name(&self) -> &'static str {
        match self {
            Run::Simulate(_) => "simulate",
            Run::Fit(_) => "fit",
            Run::Test(_) => "test",
            Run::Mc(_) => "mc",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Run::Simulate(r) => r.dgp.seed,
            Run::Fit(r) => r.seed,
            Run::Test(r) => r.seed,
            Run::Mc(r) => r.config.seed,
        }
    }

    pub fn input_paths(&self) -> Vec<&Path> {
        match self {
            Run::Fit(FitRun { inputs, .. }) | Run::Test(TestRun { inputs, .. }) => {
                vec![&inputs.curves, &inputs.responses]
            }
            _ => vec![],
        }
    }

    pub fn digests(&self) -> Result<Vec<InputDigest>> {
        self.input_paths()
            .into_iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.to_path_buf(),
                    sha256: digest_file(p)?,
                })
            })
            .collect()
    }

    pub fn execute(&self, out: &mut OutDir) -> Result<()> {
        match self {
            Run::Simulate(r) => simulate(r, out),
            Run::Fit(r) => fit(r, out),
            Run::Test(r) => test(r, out),
            Run::Mc(r) => mc(r, out),
        }
    }
}

pub fn parse_law(s: &str) -> std::result::Result<CovarianceLaw, String> {
    match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "stationary_ou" | "stationary" => Ok(CovarianceLaw::StationaryOu),
        "printed" => Ok(CovarianceLaw::Printed),
        other => Err(format!("unknown covariance law '{other}' (expected stationary-ou or printed)")),
    }
}

fn one_based(indices: &[usize]) -> Vec<usize> {
    indices.iter().map(|k| k + 1).collect()
}

#[derive(Serialize)]
struct Truth<'a> {
    beta_id: u8,
    delta: f64,
    eta: Option<f64>,
    n: usize,
    grid_points: usize,
    sigma_eps: f64,
    seed: u64,
    law: CovarianceLaw,
    missing_fraction: f64,
    grid: &'a [f64],
    beta: &'a [f64],
    /// Every response, including the ones marked missing.
    responses: &'a [f64],
    probabilities: &'a [f64],
}

fn simulate(run: &SimulateRun, out: &mut OutDir) -> Result<()> {
    let data = generate(&run.dgp)?;
    let mut curves = Vec::new();
    write_curves(&mut curves, &data.x)?;
    out.write("curves.csv", curves)?;
    let mut responses = Vec::new();
    write_responses(&mut responses, &data.y, &data.observed)?;
    out.write("responses.csv", responses)?;
    let d = &run.dgp;
    out.write_json(
        "truth.json",
        &Truth {
            beta_id: d.beta_id,
            delta: d.delta,
            eta: d.eta,
            n: d.n,
            grid_points: d.grid_points,
            sigma_eps: d.sigma_eps,
            seed: d.seed,
            law: d.law,
            missing_fraction: data.missing_fraction(),
            grid: data.x.grid().points(),
            beta: &data.beta,
            responses: &data.y,
            probabilities: &data.probabilities,
        },
    )
}

fn load(inputs: &DataInputs, var_cutoff: f64) -> Result<(MarSample, FpcBasis)> {
    let x = read_curves_path(&inputs.curves)?;
    let (y, observed) = read_responses_path(&inputs.responses)?;
    if y.len() != x.n() {
        return Err(Error::Dimension(format!(
            "{} has {} curves but {} has {} responses",
            inputs.curves.display(),
            x.n(),
            inputs.responses.display(),
            y.len()
        )));
    }
    if !observed.iter().any(|&o| o) {
        return Err(Error::Degenerate("every response is missing".into()));
    }
    let basis = fpc_decompose(&x, var_cutoff)?;
    Ok((MarSample::new(x, y, observed)?, basis))
}

#[derive(Serialize)]
struct FitReport<'a> {
    method: Method,
    n: usize,
    n_obs: usize,
    k_max: usize,
    explained_variance_ratio: &'a [f64],
    /// 1-based FPC indices of the final fit.
    indices: Vec<usize>,
    first_stage_indices: Option<Vec<usize>>,
    coefficients: &'a [f64],
    intercept: f64,
    cv_error: Option<f64>,
    lambda: Option<f64>,
    bandwidth: Option<f64>,
    grid: &'a [f64],
    beta_hat: &'a [f64],
}

fn selection_summary(selection: &Selection) -> (Option<f64>, Option<f64>) {
    match selection {
        Selection::Cutoff(s) => (s.cv.get(s.k - 1).copied(), None),
        Selection::JointCutoff(s) => (s.cv.get(s.first - 1).and_then(|r| r.get(s.second - 1)).copied(), None),
        Selection::Lasso { second, .. } => (None, Some(second.lambda)),
    }
}

fn fit(run: &FitRun, out: &mut OutDir) -> Result<()> {
    let (sample, basis) = load(&run.inputs, run.var_cutoff)?;
    let fit = estimate(run.method, &sample, &basis, &FitOptions::with_seed(run.seed), None)?;
    let (cv_error, lambda) = selection_summary(&fit.selection);
    let grid = basis.grid.points();
    out.write_json(
        "fit.json",
        &FitReport {
            method: run.method,
            n: sample.n(),
            n_obs: sample.n_obs(),
            k_max: basis.k_max(),
            explained_variance_ratio: &basis.explained_variance_ratio,
            indices: one_based(&fit.slope.indices),
            first_stage_indices: fit.plan.first_stage.as_deref().map(one_based),
            coefficients: &fit.slope.coefficients,
            intercept: fit.slope.intercept,
            cv_error,
            lambda,
            bandwidth: fit.bandwidth,
            grid,
            beta_hat: &fit.slope.curve,
        },
    )?;
    if run.plot {
        let title = format!("Estimated slope ({})", run.method);
        out.write("beta_hat.svg", plot::curves(&title, grid, &[(run.method.tag(), &fit.slope.curve)]))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TestReport<'a> {
    method: Method,
    n: usize,
    n_obs: usize,
    k_max: usize,
    /// 1-based FPC indices spanning the projection directions.
    indices: Vec<usize>,
    coefficients: &'a [f64],
    intercept: f64,
    statistic: f64,
    bootstrap: usize,
    p_value: f64,
    alpha: f64,
    rejects: bool,
    seed: u64,
    bootstrap_statistics: &'a [f64],
}

fn test(run: &TestRun, out: &mut OutDir) -> Result<()> {
    if !(run.alpha > 0.0 && run.alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must be in (0, 1), got {}", run.alpha)));
    }
    let (sample, basis) = load(&run.inputs, run.var_cutoff)?;
    let fit = estimate(run.method, &sample, &basis, &FitOptions::with_seed(run.seed), None)?;
    let result = bootstrap_estimate(&sample, &basis, &fit, run.bootstrap, run.seed)?;
    out.write_json(
        "test.json",
        &TestReport {
            method: run.method,
            n: sample.n(),
            n_obs: sample.n_obs(),
            k_max: basis.k_max(),
            indices: one_based(&result.indices),
            coefficients: &fit.slope.coefficients,
            intercept: fit.slope.intercept,
            statistic: result.statistic,
            bootstrap: result.bootstrap,
            p_value: result.p_value,
            alpha: run.alpha,
            rejects: result.rejects(run.alpha),
            seed: run.seed,
            bootstrap_statistics: &result.bootstrap_statistics,
        },
    )?;
    if run.plot {
        let title = format!("Bootstrap statistics ({}), p = {:.3}", run.method, result.p_value);
        out.write(
            "bootstrap.svg",
            plot::density(&title, "PCvM statistic", &result.bootstrap_statistics, result.statistic),
        )?;
    }
    Ok(())
}

pub const TABLE_METHODS: [Method; 8] = Method::ALL;

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.digits$}"),
        _ => "NA".into(),
    }
}

/// One table per (slope, η): a row per (n, δ), a column per estimator.
pub fn rejection_tables(report: &McReport) -> BTreeMap<String, String> {
    let mut tables: BTreeMap<String, String> = BTreeMap::new();
    let cfg = &report.config;
    for &beta in &cfg.betas {
        for &eta in &cfg.etas {
            let mut text = String::from("n,delta");
            for m in TABLE_METHODS {
                let _ = write!(text, ",{m}");
            }
            text.push('\n');
            for &n in &cfg.ns {
                for &delta in &cfg.deltas {
                    let cell = report.cell(beta, eta, n, delta);
                    let _ = write!(text, "{n},{delta}");
                    for m in TABLE_METHODS {
                        let rate = cell.and_then(|c| c.rejection_rate(m));
                        let _ = write!(text, ",{}", fmt_opt(rate, 3));
                    }
                    text.push('\n');
                }
            }
            tables.insert(format!("rejection_beta{beta}_eta{eta}.csv"), text);
        }
    }
    tables
}

fn msee_table(report: &McReport) -> String {
    let mut text = String::from("beta,eta,n,delta,method,successes,failures,mean_msee\n");
    for c in &report.cells {
        for s in &c.summaries {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{}",
                c.cell.beta_id,
                c.cell.eta,
                c.cell.n,
                c.cell.delta,
                s.method,
                s.successes,
                s.failures,
                fmt_opt(s.mean_msee, 6)
            );
        }
    }
    text
}

fn timing_table(report: &McReport) -> String {
    let mut text = String::from("beta,eta,n,delta,method,mean_seconds\n");
    for c in &report.cells {
        for &m in &report.config.methods {
            let s = c.seconds(m);
            let mean = (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64);
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                c.cell.beta_id,
                c.cell.eta,
                c.cell.n,
                c.cell.delta,
                m,
                fmt_opt(mean, 6)
            );
        }
    }
    text
}

fn log_groups(methods: &[Method], f: impl Fn(Method) -> Vec<f64>) -> Vec<(String, Vec<f64>)> {
    methods
        .iter()
        .map(|&m| (m.to_string(), f(m).into_iter().filter(|v| *v > 0.0).map(f64::ln).collect()))
        .collect()
}

fn mc(run: &McRun, out: &mut OutDir) -> Result<()> {
    let report = mc_experiment_with_progress(&run.config, |done, total| {
        eprintln!("cell {done}/{total} done");
    })?;
    let failures = report.total_failures();
    if failures > 0 {
        eprintln!("{failures} method fits failed across replicates; see msee.csv and report.json");
    }
    for (name, text) in rejection_tables(&report) {
        out.write(&name, text)?;
    }
    out.write("msee.csv", msee_table(&report))?;
    if run.timing {
        out.write("timing.csv", timing_table(&report))?;
    }
    out.write_json("report.json", &report)?;
    if run.plots {
        for c in &report.cells {
            let k = &c.cell;
            let tag = format!("beta{}_eta{}_n{}_delta{}", k.beta_id, k.eta, k.n, k.delta);
            let title = format!("beta {}, eta = {}, n = {}, delta = {}", k.beta_id, k.eta, k.n, k.delta);
            let groups = log_groups(&report.config.methods, |m| c.msee(m));
            out.write(&format!("msee_{tag}.svg"), plot::boxplot(&title, "log MSEE", &groups))?;
            if run.timing {
                let groups = log_groups(&report.config.methods, |m| c.seconds(m));
                out.write(&format!("time_{tag}.svg"), plot::boxplot(&title, "log seconds", &groups))?;
            }
        }
    }
    Ok(())
}
