//! Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 usage
//! or config error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, load_drift, parse_n_list};
use crate::drift::PiecewiseLipschitzFn;
use crate::error::Error;
use crate::experiments::{
    cell_diagnostics, coupled_occupation_distance, coupled_sde_distance, riemann_occupation_error, scheme_error,
    ExperimentConfig,
};
use crate::format::fmt_e;
use crate::gaussian::{kappa, tong_lower_bound, BivariateBoundInput};
use crate::solvers::SdeSpec;

#[derive(Parser, Debug)]
#[command(name = "sdecouple", version, about = "Coupled-noise experiments for SDEs with discontinuous drift")]
struct Cli {
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Error tables with log-log rate fits.
    #[command(subcommand)]
    Rates(RateKind),
    /// Gaussian covariance bounds.
    #[command(subcommand)]
    Bounds(BoundKind),
    /// Per-cell diagnostics.
    #[command(subcommand)]
    Diag(DiagKind),
    /// Check a drift file against the drift conditions.
    ValidateDrift {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum RateKind {
    /// Distance of the Euler solutions driven by W and W̃.
    SdeLower(RunArgs),
    /// Euler error against a refined reference.
    Scheme(RunArgs),
    /// Distance of the occupation integrals along W and W̃.
    OccupationLower(RunArgs),
    /// Riemann-sum occupation error.
    OccupationRiemann(RunArgs),
}

#[derive(Subcommand, Debug)]
enum BoundKind {
    Kappa,
    Tong {
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        spec: PathBuf,
        /// Second function; defaults to the first.
        #[arg(long)]
        spec_g: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum DiagKind {
    /// `m_i` and `d_i` for every coarse cell, one block per n.
    Cells(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Comma-separated coarse cell counts.
    #[arg(long)]
    n_list: Option<String>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn config(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Runs the CLI on `argv` (program name first), writing to process stdout / stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr().lock());
    run_with(argv, &mut out, &mut err)
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be positive".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Failure::Runtime(e.to_string())),
        },
        None => dispatch(cli.command),
    };
    match result.and_then(|output| emit(output, out)) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
    }
}

struct Output {
    text: String,
    path: Option<PathBuf>,
}

fn emit(output: Output, out: &mut dyn Write) -> Result<(), Failure> {
    match output.path {
        Some(path) => std::fs::write(&path, output.text)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => out.write_all(output.text.as_bytes()).map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn dispatch(command: Command) -> Result<Output, Failure> {
    let to_stdout = |text| Ok(Output { text, path: None });
    match command {
        Command::Rates(kind) => {
            let (args, run): (RunArgs, fn(&ExperimentConfig) -> crate::Result<_>) = match kind {
                RateKind::SdeLower(a) => (a, coupled_sde_distance),
                RateKind::Scheme(a) => (a, scheme_error),
                RateKind::OccupationLower(a) => (a, coupled_occupation_distance),
                RateKind::OccupationRiemann(a) => (a, riemann_occupation_error),
            };
            let cfg = experiment_config(&args)?;
            let table = run(&cfg).map_err(Failure::runtime)?;
            Ok(Output { text: table.to_csv(), path: args.out })
        }
        Command::Diag(DiagKind::Cells(args)) => {
            let cfg = experiment_config(&args)?;
            Ok(Output { text: cells_csv(&cfg)?, path: args.out })
        }
        Command::Bounds(BoundKind::Kappa) => to_stdout(format!("kappa={}\n", fmt_e(kappa(), 12))),
        Command::Bounds(BoundKind::Tong { rho, spec, spec_g }) => {
            let f = drift_from(&spec)?;
            let g = match spec_g {
                Some(path) => drift_from(&path)?,
                None => f.clone(),
            };
            let input = BivariateBoundInput::from_fns(&f, &g, rho).map_err(Failure::config)?;
            let value = tong_lower_bound(&input).map_err(Failure::runtime)?;
            to_stdout(format!("tong={}\n", fmt_e(value, 12)))
        }
        Command::ValidateDrift { spec } => {
            let report = drift_from(&spec)?.validate();
            let mut text = format!("{report}\n");
            for (name, check) in report.checks() {
                if !check.holds {
                    let _ = writeln!(text, "({name}): {}", check.detail);
                }
            }
            to_stdout(text)
        }
    }
}

fn drift_from(path: &Path) -> Result<PiecewiseLipschitzFn, Failure> {
    load_drift(path).map_err(Failure::config)
}

fn experiment_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path).map_err(Failure::config)?,
        None => {
            let spec = SdeSpec::new(PiecewiseLipschitzFn::indicator_nonneg(), 0.0).map_err(Failure::config)?;
            ExperimentConfig::new(spec)
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(m) = args.replications {
        cfg.replications = m;
    }
    if let Some(list) = &args.n_list {
        cfg.n_list = parse_n_list(list).map_err(Failure::Usage)?;
    }
    cfg.validate().map_err(Failure::config)?;
    Ok(cfg)
}

fn cells_csv(cfg: &ExperimentConfig) -> Result<String, Failure> {
    let mut text = String::from("n,cell,m,m_stderr,d,d_stderr,replications,master_seed\n");
    for &n in &cfg.n_list {
        let diag = cell_diagnostics(cfg, n).map_err(|e| match e {
            Error::Config(_) => Failure::config(e),
            _ => Failure::runtime(e),
        })?;
        for (i, (m, d)) in diag.m.iter().zip(&diag.d).enumerate() {
            let _ = writeln!(
                text,
                "{n},{},{},{},{},{},{},{}",
                i + 1,
                fmt_e(m.mean, 10),
                fmt_e(m.stderr, 10),
                fmt_e(d.mean, 10),
                fmt_e(d.stderr, 10),
                m.replications,
                cfg.seed
            );
        }
        let (sum, direct, se) = diag.sum_check();
        let _ = writeln!(
            text,
            "# n={n} sum={} direct={} combined_stderr={}",
            fmt_e(sum, 10),
            fmt_e(direct, 10),
            fmt_e(se, 10)
        );
    }
    Ok(text)
}
