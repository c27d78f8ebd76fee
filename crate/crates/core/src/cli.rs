//! Command line front end: one subcommand per experiment.
//!
//! A subcommand starts from `--config <path>` (an [`ExperimentSpec`] in
//! JSON) when given, applies its own flags on top, runs, prints a summary and
//! writes the table to `--out` if asked. Exit codes: 0 success, 2 argument
//! error, 3 numerical or experiment failure, 4 threshold violation under
//! `--assert`, 1 I/O.

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::em::StopRule;
use crate::error::{Error, Result};
use crate::harness::{run_experiment, ExperimentKind, ExperimentSpec, OutputFormat};
use crate::model::FitFamily;
use crate::population::OperatorKind;
use crate::stats::SurfaceMode;
use crate::theory::RecursionKind;

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::arg(format!("unknown format `{s}` (csv, json)"))),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "singular-em",
    version,
    about = "EM on over-specified Gaussian mixtures: rates, population operators and theory checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample-EM error against n.
    Rates(RatesArgs),
    /// Population-like EM iterates next to their surrogate recursion.
    PopDecay(DecayArgs),
    /// Contraction ratios against their predicted intervals.
    Contraction(ContractionArgs),
    /// Sup-deviation of sample from population operators against radius.
    Perturbation(PerturbationArgs),
    /// Population log-likelihood gap along the location or coupled path.
    Surface(SurfaceArgs),
    /// Hellinger distance of the two-point minimax pair.
    Hellinger(HellingerArgs),
    /// Localization-radius recursions and their fixed points.
    Recursion(RecursionArgs),
    /// Concentration of empirical even moments.
    Moments(MomentArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (CSV unless `--format json`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Exit with code 4 when the acceptance thresholds are not met.
    #[arg(long)]
    assert: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, alias = "dims", value_delimiter = ',')]
    dim: Option<Vec<usize>>,
    #[arg(long)]
    fit: Option<FitFamily>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    init_radius: Option<f64>,
    /// Stop tolerance on ‖θ_{t+1} - θ_t‖ (needs `--max-iters`).
    #[arg(long, requires = "max_iters")]
    tol: Option<f64>,
    #[arg(long, requires = "tol")]
    max_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct DecayArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, alias = "dims", value_delimiter = ',')]
    dim: Option<Vec<usize>>,
    /// Sample size fixing Z_{n,d}.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    theta0: Option<f64>,
    /// Use this Z_{n,d} instead of sampling it.
    #[arg(long)]
    z_nd: Option<f64>,
}

#[derive(Debug, Args)]
struct ContractionArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, alias = "dims", value_delimiter = ',')]
    dim: Option<Vec<usize>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    z_nd: Option<f64>,
}

#[derive(Debug, Args)]
struct PerturbationArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    operator: Option<OperatorKind>,
    #[arg(long, alias = "dims", value_delimiter = ',')]
    dim: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Debug, Args)]
struct SurfaceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    mode: Option<SurfaceMode>,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct HellingerArgs {
    #[command(flatten)]
    common: Common,
    /// Values of θ₁.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    base_v2: Option<f64>,
}

#[derive(Debug, Args)]
struct RecursionArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kind: Option<RecursionKind>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    a0: Option<f64>,
}

#[derive(Debug, Args)]
struct MomentArgs {
    #[command(flatten)]
    common: Common,
    /// Moment order: checks the empirical 2k-th moment.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn base_spec(kind: ExperimentKind, common: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(path) => {
            let spec = ExperimentSpec::load(path)?;
            if spec.experiment != kind {
                return Err(Error::arg(format!(
                    "config describes `{}`, not `{}`",
                    spec.experiment.name(),
                    kind.name()
                )));
            }
            spec
        }
        None => ExperimentSpec::new(kind),
    };
    if let Some(seed) = common.seed {
        spec.master_seed = seed;
    }
    if let Some(out) = &common.out {
        spec.output = Some(out.clone());
    }
    if let Some(format) = common.format {
        spec.format = format;
    }
    Ok(spec)
}

fn build_spec(command: Command) -> Result<(ExperimentSpec, bool)> {
    let (spec, assert) = match command {
        Command::Rates(a) => {
            let mut s = base_spec(ExperimentKind::Rates, &a.common)?;
            set(&mut s.dims, a.dim);
            set(&mut s.ns, a.ns);
            set(&mut s.trials, a.trials);
            if let Some(fit) = a.fit {
                s.fit = fit;
            }
            if let Some(r) = a.init_radius {
                s.init_radius = r;
            }
            if let (Some(tol), Some(cap)) = (a.tol, a.max_iters) {
                s.stop = Some(StopRule::new(tol, cap)?);
            }
            (s, a.common.assert)
        }
        Command::PopDecay(a) => {
            let mut s = base_spec(ExperimentKind::PopulationDecay, &a.common)?;
            set(&mut s.dims, a.dim);
            set(&mut s.ns, a.n.map(|n| vec![n]));
            set(&mut s.steps, a.steps);
            set(&mut s.theta0, a.theta0);
            set(&mut s.z_nd, a.z_nd);
            (s, a.common.assert)
        }
        Command::Contraction(a) => {
            let mut s = base_spec(ExperimentKind::ContractionScan, &a.common)?;
            set(&mut s.dims, a.dim);
            set(&mut s.ns, a.n.map(|n| vec![n]));
            set(&mut s.beta, a.beta);
            set(&mut s.grid_points, a.grid_points);
            set(&mut s.z_nd, a.z_nd);
            (s, a.common.assert)
        }
        Command::Perturbation(a) => {
            let mut s = base_spec(ExperimentKind::PerturbationScan, &a.common)?;
            set(&mut s.operator, a.operator);
            set(&mut s.dims, a.dim);
            set(&mut s.ns, a.ns);
            set(&mut s.trials, a.trials);
            set(&mut s.radii, a.radii);
            set(&mut s.grid_points, a.grid_points);
            (s, a.common.assert)
        }
        Command::Surface(a) => {
            let mut s = base_spec(ExperimentKind::LikelihoodSurface, &a.common)?;
            set(&mut s.surface_mode, a.mode);
            set(&mut s.theta_grid, a.grid);
            (s, a.common.assert)
        }
        Command::Hellinger(a) => {
            let mut s = base_spec(ExperimentKind::HellingerExponent, &a.common)?;
            set(&mut s.theta_grid, a.grid);
            set(&mut s.base_v2, a.base_v2);
            (s, a.common.assert)
        }
        Command::Recursion(a) => {
            let mut s = base_spec(ExperimentKind::Recursion, &a.common)?;
            set(&mut s.recursion, a.kind);
            set(&mut s.steps, a.steps);
            set(&mut s.a0, a.a0);
            (s, a.common.assert)
        }
        Command::Moments(a) => {
            let mut s = base_spec(ExperimentKind::MomentConcentration, &a.common)?;
            set(&mut s.moment_k, a.k);
            set(&mut s.ns, a.ns);
            set(&mut s.trials, a.trials);
            (s, a.common.assert)
        }
    };
    spec.validate()?;
    Ok((spec, assert))
}

fn execute(command: Command) -> Result<()> {
    let (spec, assert) = build_spec(command)?;
    let output = run_experiment(&spec)?;
    match &spec.output {
        Some(path) => {
            output.write(path, spec.format)?;
            print!("{}", output.summary());
        }
        None if spec.format == OutputFormat::Json => println!("{}", output.to_json()?),
        None => print!("{}", output.summary()),
    }
    if assert {
        output.check_thresholds()?;
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
