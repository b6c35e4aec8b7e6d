//! `marflm`: simulate data, fit slope estimators, run the bootstrap
//! linearity test and Monte Carlo studies from the command line.
//!
//! Exit codes: 0 success, 2 unparsable input, 3 invalid configuration or
//! usage, 4 numerical failure, 5 I/O failure.

mod commands;
mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use marflm::functional::DEFAULT_VAR_CUTOFF;
use marflm::simulation::{CovarianceLaw, DgpConfig, McConfig};
use marflm::{Error, ErrorKind, Method, Result};

use commands::{parse_law, DataInputs, FitRun, McRun, Run, SimulateRun, TestRun};
use output::{read_manifest, OutDir, RunManifest, MANIFEST};

#[derive(Parser)]
#[command(name = "marflm", version, about = "Functional linear regression with responses missing at random")]
struct Cli {
    /// Worker threads; 0 uses one per logical core.
    #[arg(long, global = true, env = "MARFLM_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw curves, responses and a missingness pattern.
    Simulate(SimulateArgs),
    /// Fit a slope estimator.
    Fit(FitArgs),
    /// Bootstrap test of the linear model.
    Test(TestArgs),
    /// Monte Carlo study over a design grid.
    Mc(McArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Slope: 1, 2 or 3.
    #[arg(long, default_value_t = 1)]
    beta: u8,
    /// Size of the quadratic deviation from linearity.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Observance parameter of the logistic missingness model.
    #[arg(long, default_value_t = 1.0, conflicts_with = "no_missing")]
    eta: f64,
    /// Observe every response.
    #[arg(long)]
    no_missing: bool,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 201)]
    grid_points: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma_eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Covariate covariance: stationary-ou or printed.
    #[arg(long, default_value = "stationary-ou", value_parser = parse_law)]
    law: CovarianceLaw,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Grid row followed by one row per curve.
    #[arg(long)]
    curves: PathBuf,
    /// `y,observed` rows; missing responses as NA or empty.
    #[arg(long)]
    responses: PathBuf,
    #[arg(long, default_value = "S")]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep components until the next explains less than this share.
    #[arg(long, default_value_t = DEFAULT_VAR_CUTOFF)]
    kmax_var_cutoff: f64,
    /// Skip the SVG plot.
    #[arg(long)]
    no_plot: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct McArgs {
    /// TOML file with any of the design keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<u8>>,
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, short = 'M')]
    replications: Option<usize>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Required here or in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kmax_var_cutoff: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    sigma_eps: Option<f64>,
    /// M = 1000 and B = 1000 unless given explicitly.
    #[arg(long)]
    full_scale: bool,
    /// Record wall times (timing.csv and plots); these differ between runs.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    no_plots: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Defaults to the manifest's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(p)?)
}

impl DataArgs {
    fn inputs(&self) -> Result<DataInputs> {
        Ok(DataInputs {
            curves: absolute(&self.curves)?,
            responses: absolute(&self.responses)?,
        })
    }
}

fn toml_line(text: &str, span: Option<std::ops::Range<usize>>) -> usize {
    span.map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

fn mc_config(args: &McArgs) -> Result<McConfig> {
    let mut config = McConfig::default();
    let mut seed = None;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse {
            line: toml_line(&text, e.span()),
            message: format!("{}: {}", path.display(), e.message()),
        })?;
        seed = table.get("seed").and_then(|v| v.as_integer()).map(|v| v as u64);
        config = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("{}: {}", path.display(), e.message())))?;
    }
    if args.full_scale {
        config.replications = 1000;
        config.bootstrap = 1000;
    }
    macro_rules! set {
        ($($field:ident <- $arg:expr),*) => {
            $(if let Some(v) = $arg.clone() { config.$field = v; })*
        };
    }
    set!(betas <- args.betas, etas <- args.etas, ns <- args.ns, deltas <- args.deltas,
        replications <- args.replications, bootstrap <- args.bootstrap, alpha <- args.alpha,
        methods <- args.methods, var_cutoff <- args.kmax_var_cutoff,
        grid_points <- args.grid_points, sigma_eps <- args.sigma_eps);
    config.seed = args.seed.or(seed).ok_or_else(|| {
        Error::InvalidConfig("mc needs a seed (--seed or `seed` in the config file)".into())
    })?;
    config.validate()?;
    Ok(config)
}

/// Turns parsed arguments into the run to execute and its output directory.
fn resolve(command: Command) -> Result<(Run, PathBuf, Option<RunManifest>)> {
    Ok(match command {
        Command::Simulate(a) => {
            let dgp = DgpConfig {
                beta_id: a.beta,
                delta: a.delta,
                eta: (!a.no_missing).then_some(a.eta),
                n: a.n,
                grid_points: a.grid_points,
                sigma_eps: a.sigma_eps,
                seed: a.seed,
                law: a.law,
            };
            dgp.validate()?;
            (Run::Simulate(SimulateRun { dgp }), a.out, None)
        }
        Command::Fit(FitArgs { data }) => {
            let run = FitRun {
                inputs: data.inputs()?,
                method: data.method,
                seed: data.seed,
                var_cutoff: data.kmax_var_cutoff,
                plot: !data.no_plot,
            };
            (Run::Fit(run), data.out, None)
        }
        Command::Test(TestArgs { data, bootstrap, alpha }) => {
            let run = TestRun {
                inputs: data.inputs()?,
                method: data.method,
                bootstrap,
                seed: data.seed,
                alpha,
                var_cutoff: data.kmax_var_cutoff,
                plot: !data.no_plot,
            };
            (Run::Test(run), data.out, None)
        }
        Command::Mc(a) => {
            let run = McRun {
                config: mc_config(&a)?,
                timing: a.timing,
                plots: !a.no_plots,
            };
            (Run::Mc(run), a.out, None)
        }
        Command::Replay(a) => {
            let manifest = read_manifest(&a.manifest)?;
            let tagged = serde_json::json!({ "command": manifest.command, "config": manifest.config });
            let run: Run = serde_json::from_value(tagged)
                .map_err(|e| Error::InvalidConfig(format!("manifest config: {e}")))?;
            let out = match a.out {
                Some(o) => o,
                None => a.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            (run, out, Some(manifest))
        }
    })
}

fn check_inputs(run: &Run, recorded: &RunManifest) -> Result<()> {
    for (now, then) in run.digests()?.iter().zip(&recorded.inputs) {
        if now.sha256 != then.sha256 {
            return Err(Error::InvalidConfig(format!(
                "{} changed since the manifest was written",
                now.path.display()
            )));
        }
    }
    Ok(())
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let (run, out_path, recorded) = resolve(cli.command)?;
    if let Some(m) = &recorded {
        check_inputs(&run, m)?;
    }
    let start = Instant::now();
    let inputs = run.digests()?;
    let mut out = OutDir::create(&out_path)?;
    run.execute(&mut out)?;
    let manifest = RunManifest {
        command: run.name().into(),
        argv,
        config: match serde_json::to_value(&run) {
            Ok(serde_json::Value::Object(mut o)) => o.remove("config").unwrap_or_default(),
            _ => serde_json::Value::Null,
        },
        seed: run.seed(),
        version: env!("CARGO_PKG_VERSION").into(),
        inputs,
        wall_seconds: start.elapsed().as_secs_f64(),
        outputs: out.written().to_vec(),
    };
    out.write_json(MANIFEST, &manifest)?;
    eprintln!("wrote {} files to {}", out.written().len(), out_path.display());
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Parse => 2,
        ErrorKind::Config => 3,
        ErrorKind::Numerical => 4,
        ErrorKind::Io => 5,
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc_args(extra: &[&str]) -> McArgs {
        let mut argv = vec!["marflm", "mc"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Mc(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn mc_refuses_to_run_unseeded() {
        let err = mc_config(&mc_args(&[])).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Config);
        assert_eq!(mc_config(&mc_args(&["--seed", "4"])).unwrap().seed, 4);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mc.toml");
        std::fs::write(&path, "seed = 9\nbetas = [2, 3]\nreplications = 7\nmethods = [\"S\", \"I\"]\n").unwrap();
        let p = path.to_str().unwrap();
        let c = mc_config(&mc_args(&["--config", p, "-M", "3", "--full-scale"])).unwrap();
        assert_eq!((c.seed, c.replications, c.bootstrap), (9, 3, 1000));
        assert_eq!(c.betas, vec![2, 3]);
        assert_eq!(c.methods, vec![Method::S, Method::I]);
    }

    #[test]
    fn config_errors_are_classified() {
        let dir = tempfile::tempdir().unwrap();
        let bad_syntax = dir.path().join("a.toml");
        std::fs::write(&bad_syntax, "seed = 1\nbetas = [1,\nns = \n").unwrap();
        let e = mc_config(&mc_args(&["--config", bad_syntax.to_str().unwrap()])).unwrap_err();
        assert!(matches!(e, Error::Parse { .. }), "{e}");
        let unknown = dir.path().join("b.toml");
        std::fs::write(&unknown, "seed = 1\ncolour = 3\n").unwrap();
        let e = mc_config(&mc_args(&["--config", unknown.to_str().unwrap()])).unwrap_err();
        assert_eq!(e.kind(), ErrorKind::Config);
    }

    #[test]
    fn toml_lines_are_one_based() {
        assert_eq!(toml_line("a\nb\nc", Some(4..5)), 3);
        assert_eq!(toml_line("abc", None), 1);
    }
}
