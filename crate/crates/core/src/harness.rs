//! Experiment specifications, the seeded trial runner and CSV/JSON output.
//!
//! Every experiment is described by an [`ExperimentSpec`] (which is also the
//! JSON config format of the command line tool) and produces an
//! [`ExperimentOutput`]. Trials draw from streams keyed by
//! `(master_seed, experiment, d, n, trial)`, so a trial is reproducible on its
//! own and output never depends on scheduling.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{initial_params, random_on_sphere, run_em_with, EmOptions, StopRule};
use crate::error::{Error, Result};
use crate::model::{sample_standard_normal, FitFamily};
use crate::population::{
    corrected_contraction_bounds, mean_stderr, multivariate_contraction_bounds, perturbation_scan,
    surrogate_sequence, univariate_contraction_bounds, OperatorKind, PerturbationSpec,
    PerturbationTable, PopulationOperator,
};
use crate::quadrature::QuadratureSpec;
use crate::rng::RngSpec;
use crate::stats::{
    hellinger_exponent_fit, likelihood_surface_scan, location_error, log_grid, minimax_pair,
    rate_fit, scale_error, RateFit, SurfaceMode, SurfaceScan,
};
use crate::theory::{
    localization_recursion, moment_concentration_check, MomentCheck, RecursionKind, RecursionTrace,
};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SINGULAR_EM_THREADS";

/// CSV header of per-trial rate rows.
pub const RATES_HEADER: &str = "experiment,fit,d,n,trial,loc_error,scale_error,iters,clamped,seed";
/// CSV header of per-`(d, n)` rate aggregates.
pub const AGGREGATES_HEADER: &str =
    "fit,d,n,mean_loc_error,stderr,median_loc_error,mean_scale_error";
pub const DECAY_HEADER: &str = "d,t,theta_norm,surrogate";
pub const PERTURBATION_HEADER: &str = "operator,d,n,r,mean_sup_dev,stderr";
pub const CONTRACTION_HEADER: &str = "operator,d,n,z_nd,theta_norm,ratio,lower,upper,inside";
pub const SURFACE_HEADER: &str = "mode,theta,gap";
pub const HELLINGER_HEADER: &str = "theta1,v1,theta2,v2,hellinger";
pub const RECURSION_HEADER: &str = "kind,step,value,fixed_point";
pub const MOMENTS_HEADER: &str = "k,n,mean_abs_dev,stderr";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rates,
    PopulationDecay,
    ContractionScan,
    PerturbationScan,
    LikelihoodSurface,
    HellingerExponent,
    Recursion,
    MomentConcentration,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Rates => "rates",
            ExperimentKind::PopulationDecay => "population_decay",
            ExperimentKind::ContractionScan => "contraction_scan",
            ExperimentKind::PerturbationScan => "perturbation_scan",
            ExperimentKind::LikelihoodSurface => "likelihood_surface",
            ExperimentKind::HellingerExponent => "hellinger_exponent",
            ExperimentKind::Recursion => "recursion",
            ExperimentKind::MomentConcentration => "moment_concentration",
        }
    }

    /// Stable key mixed into trial streams.
    fn stream_key(&self) -> u64 {
        *self as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Settings of one experiment; unset fields take per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub fit: FitFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_init_radius")]
    pub init_radius: f64,
    /// Overrides the per-`(n, d)` default stop rule when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,

    /// Iterations of the population decay or the recursion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Starting norm of the population decay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    /// Replaces the sampled `Z_{n,d}` of the decay and contraction runs;
    /// `1` gives the large-sample limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_nd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// Slack exponent of the contraction ranges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recursion: Option<RecursionKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_mode: Option<SurfaceMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_v2: Option<f64>,
}

fn default_init_radius() -> f64 {
    0.1
}

/// `2^10, 2^11, …, 2^17`.
pub fn default_rate_ns() -> Vec<usize> {
    (10..=17).map(|k| 1usize << k).collect()
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            fit: FitFamily::Isotropic,
            dims: None,
            ns: None,
            trials: None,
            master_seed: 0,
            init_radius: default_init_radius(),
            stop: None,
            output: None,
            format: OutputFormat::Csv,
            steps: None,
            theta0: None,
            z_nd: None,
            operator: None,
            radii: None,
            beta: None,
            grid_points: None,
            recursion: None,
            a0: None,
            moment_k: None,
            surface_mode: None,
            theta_grid: None,
            base_v2: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::arg(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::arg(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.dims.clone().unwrap_or_else(|| match self.experiment {
            ExperimentKind::PopulationDecay | ExperimentKind::ContractionScan => vec![1, 2],
            _ => vec![1],
        })
    }

    pub fn ns(&self) -> Vec<usize> {
        self.ns.clone().unwrap_or_else(|| match self.experiment {
            ExperimentKind::Rates => default_rate_ns(),
            ExperimentKind::PopulationDecay | ExperimentKind::ContractionScan => vec![1_000_000],
            ExperimentKind::PerturbationScan => vec![1000],
            ExperimentKind::MomentConcentration => vec![1000, 3162, 10_000, 31_623, 100_000],
            _ => vec![],
        })
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(match self.experiment {
            ExperimentKind::PerturbationScan => 100,
            _ => 200,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ns = self.ns();
        if ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("ns must be sorted strictly ascending"));
        }
        if ns.contains(&0) {
            return Err(Error::arg("ns must be positive"));
        }
        if self.trials() == 0 {
            return Err(Error::arg("trials must be at least 1"));
        }
        if self.dims().contains(&0) {
            return Err(Error::arg("dimensions must be positive"));
        }
        if !(self.init_radius > 0.0) || !self.init_radius.is_finite() {
            return Err(Error::arg("init_radius must be positive"));
        }
        if let Some(stop) = &self.stop {
            stop.validate()?;
        }
        Ok(())
    }
}

/// Runs `f` on a pool sized by [`THREADS_ENV`] (all cores when unset).
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| Error::arg(format!("{THREADS_ENV} must be a positive integer")))?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Experiment(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Outcome of one rate-experiment trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub experiment: ExperimentKind,
    pub fit: FitFamily,
    pub d: usize,
    pub n: usize,
    pub trial: usize,
    pub loc_error: f64,
    pub scale_error: f64,
    pub iters: usize,
    pub clamped: bool,
    pub seed: u64,
    pub wall_time_s: f64,
    /// Set when the trial failed; the error columns are then NaN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAggregate {
    pub fit: FitFamily,
    pub d: usize,
    pub n: usize,
    pub mean_loc_error: f64,
    pub stderr: f64,
    pub median_loc_error: f64,
    pub mean_scale_error: f64,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionFit {
    pub d: usize,
    /// Mean location error against `n`.
    pub location: RateFit,
    /// Mean scale error against `n`.
    pub scale: RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub fit: FitFamily,
    pub trials: Vec<TrialResult>,
    pub aggregates: Vec<RateAggregate>,
    /// One per dimension with at least three sample sizes.
    pub fits: Vec<DimensionFit>,
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// The stream of trial `trial` of an experiment at `(d, n)`.
pub fn trial_rng(
    master_seed: u64,
    experiment: ExperimentKind,
    d: usize,
    n: usize,
    trial: usize,
) -> RngSpec {
    RngSpec::keyed(
        master_seed,
        &[experiment.stream_key(), d as u64, n as u64, trial as u64],
    )
}

/// Runs one rate trial: fresh data, a random start of norm `init_radius`,
/// EM to the stop rule.
pub fn run_rate_trial(spec: &ExperimentSpec, d: usize, n: usize, trial: usize) -> TrialResult {
    let start = Instant::now();
    let rng = trial_rng(spec.master_seed, ExperimentKind::Rates, d, n, trial);
    let stop = spec
        .stop
        .unwrap_or_else(|| StopRule::default_for(spec.fit, n, d));
    let outcome = (|| {
        let data = sample_standard_normal(n, d, &rng.child(0))?;
        let theta0 = random_on_sphere(d, spec.init_radius, &rng.child(1));
        let init = initial_params(spec.fit, &theta0, &data)?;
        run_em_with(&init, &data, &stop, &EmOptions::fast())
    })();
    let mut result = TrialResult {
        experiment: ExperimentKind::Rates,
        fit: spec.fit,
        d,
        n,
        trial,
        loc_error: f64::NAN,
        scale_error: f64::NAN,
        iters: 0,
        clamped: false,
        seed: spec.master_seed,
        wall_time_s: 0.0,
        failure: None,
    };
    match outcome {
        Ok(traj) => {
            let fin = traj.final_params();
            result.loc_error = location_error(fin);
            result.scale_error = scale_error(fin);
            result.iters = traj.iterations;
            result.clamped = traj.clamped;
        }
        Err(e) => {
            if let Error::Step { iteration, .. } = &e {
                result.iters = *iteration;
            }
            result.failure = Some(e.to_string());
        }
    }
    result.wall_time_s = start.elapsed().as_secs_f64();
    result
}

/// Sample-EM error against `n` for each dimension.
pub fn run_rate_experiment(spec: &ExperimentSpec) -> Result<RateTable> {
    spec.validate()?;
    let (dims, ns, trials) = (spec.dims(), spec.ns(), spec.trials());
    let jobs: Vec<(usize, usize, usize)> = dims
        .iter()
        .flat_map(|&d| {
            ns.iter()
                .flat_map(move |&n| (0..trials).map(move |i| (d, n, i)))
        })
        .collect();
    let results: Vec<TrialResult> = with_pool(|| {
        jobs.par_iter()
            .map(|&(d, n, i)| run_rate_trial(spec, d, n, i))
            .collect()
    })?;

    let mut aggregates = Vec::new();
    for &d in &dims {
        for &n in &ns {
            let cell: Vec<&TrialResult> = results.iter().filter(|r| r.d == d && r.n == n).collect();
            let ok: Vec<&TrialResult> = cell
                .iter()
                .copied()
                .filter(|r| r.failure.is_none())
                .collect();
            let failed = cell.len() - ok.len();
            if failed * 10 > cell.len() {
                let first = cell
                    .iter()
                    .find_map(|r| r.failure.clone())
                    .unwrap_or_default();
                return Err(Error::Experiment(format!(
                    "{failed} of {} trials failed at d = {d}, n = {n}; first: {first}",
                    cell.len()
                )));
            }
            let locs: Vec<f64> = ok.iter().map(|r| r.loc_error).collect();
            let scales: Vec<f64> = ok.iter().map(|r| r.scale_error).collect();
            let (mean, stderr) = mean_stderr(&locs);
            aggregates.push(RateAggregate {
                fit: spec.fit,
                d,
                n,
                mean_loc_error: mean,
                stderr,
                median_loc_error: median(&locs),
                mean_scale_error: mean_stderr(&scales).0,
                failed,
            });
        }
    }

    let mut fits = Vec::new();
    if ns.len() >= 3 {
        for &d in &dims {
            let rows: Vec<&RateAggregate> = aggregates.iter().filter(|a| a.d == d).collect();
            let xs: Vec<f64> = rows.iter().map(|a| a.n as f64).collect();
            let loc: Vec<f64> = rows.iter().map(|a| a.mean_loc_error).collect();
            let scale: Vec<f64> = rows.iter().map(|a| a.mean_scale_error).collect();
            fits.push(DimensionFit {
                d,
                location: rate_fit(&xs, &loc)?,
                scale: rate_fit(&xs, &scale)?,
            });
        }
    }
    Ok(RateTable {
        fit: spec.fit,
        trials: results,
        aggregates,
        fits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub d: usize,
    pub t: usize,
    pub theta_norm: f64,
    pub surrogate: f64,
}

/// Surrogate recursion `θ/(1 + cθ^k)` shown next to the decay in dimension
/// `d`: `(1, 6)` in one dimension, `(1/2, 2)` otherwise.
pub fn decay_surrogate(d: usize) -> (f64, i32) {
    if d == 1 {
        (1.0, 6)
    } else {
        (0.5, 2)
    }
}

/// Iterates `θ_{t+1} = M̃_{n,d}(θ_t)` by quadrature for each dimension, with
/// `Z_{n,d}` taken from one fixed sample of size `ns()[0]`.
///
/// Once `‖θ_t‖⁶` drops below `|Z_{n,d} - 1|` the sampled denominator, not the
/// singular curvature, drives the iterates (to zero or to a spurious fixed
/// point), so tracking of the surrogate over very long horizons needs
/// `z_nd = 1`.
pub fn run_population_decay(spec: &ExperimentSpec) -> Result<Vec<DecayRow>> {
    spec.validate()?;
    let steps = spec.steps.unwrap_or(10_000);
    let theta0 = spec.theta0.unwrap_or(0.5);
    if !(theta0 >= 0.0) {
        return Err(Error::arg("theta0 must be nonnegative"));
    }
    let n = *spec
        .ns()
        .first()
        .ok_or_else(|| Error::arg("population decay needs n"))?;
    let quad = QuadratureSpec::default();
    let per_dim: Vec<Vec<DecayRow>> = with_pool(|| {
        spec.dims()
            .par_iter()
            .map(|&d| {
                let rng = trial_rng(spec.master_seed, ExperimentKind::PopulationDecay, d, n, 0);
                let z = match spec.z_nd {
                    Some(z) => z,
                    None => sample_standard_normal(n, d, &rng)?.z_nd(),
                };
                let op = PopulationOperator::pseudo(z, d)?;
                let (c, k) = decay_surrogate(d);
                let sur = surrogate_sequence(c, k, theta0, steps);
                let mut rows = Vec::with_capacity(steps + 1);
                let mut r = theta0;
                for (t, s) in sur.into_iter().enumerate() {
                    rows.push(DecayRow {
                        d,
                        t,
                        theta_norm: r,
                        surrogate: s,
                    });
                    if t < steps {
                        r = op
                            .radial(r, &quad)
                            .map_err(|e| Error::Step {
                                iteration: t,
                                source: Box::new(e),
                            })?
                            .value;
                    }
                }
                Ok(rows)
            })
            .collect::<Result<_>>()
    })??;
    Ok(per_dim.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub operator: OperatorKind,
    pub d: usize,
    pub n: usize,
    pub z_nd: f64,
    pub theta_norm: f64,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionScan {
    pub rows: Vec<ContractionRow>,
    /// Human-readable notes, e.g. ranges that turned out empty.
    pub notes: Vec<String>,
}

impl ContractionScan {
    pub fn all_inside(&self) -> bool {
        self.rows.iter().all(|r| r.inside)
    }
}

/// `points` evenly spaced values from `lo` to `hi`; empty when `lo > hi`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if lo > hi || points == 0 {
        return Vec::new();
    }
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Ratio rows for `op` on `grid`, compared through deficits against the
/// interval `bounds(r) = (lower, upper)` of the ratio.
pub fn contraction_rows(
    op: &PopulationOperator,
    kind: OperatorKind,
    n: usize,
    grid: &[f64],
    bounds: impl Fn(f64) -> (f64, f64),
    quad: &QuadratureSpec,
) -> Result<Vec<ContractionRow>> {
    let z_nd = match *op {
        PopulationOperator::Pseudo { z_nd, .. } => z_nd,
        PopulationOperator::Corrected { .. } => 1.0,
    };
    grid.iter()
        .map(|&r| {
            let deficit = op.contraction_deficit(r, quad)?;
            let (lower, upper) = bounds(r);
            // compare deficits: 1 - lower and 1 - upper are exact enough in
            // the closed forms below, the ratio itself is not
            let (lo_def, hi_def) = (lower - 1.0, upper - 1.0);
            Ok(ContractionRow {
                operator: kind,
                d: op.dim(),
                n,
                z_nd,
                theta_norm: r,
                ratio: 1.0 + deficit,
                lower,
                upper,
                inside: deficit >= lo_def && deficit <= hi_def,
            })
        })
        .collect()
}

/// Contraction ratios of the pseudo-population operator (one fixed sample per
/// dimension) on the ranges where the interval statements apply, plus the
/// corrected operator on `(0, 3/20]`.
pub fn run_contraction_scan(spec: &ExperimentSpec) -> Result<ContractionScan> {
    spec.validate()?;
    let beta = spec.beta.unwrap_or(0.05);
    let points = spec.grid_points.unwrap_or(20);
    let n = *spec
        .ns()
        .first()
        .ok_or_else(|| Error::arg("contraction scan needs n"))?;
    let quad = QuadratureSpec::default();
    let nf = n as f64;
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for d in spec.dims() {
        let rng = trial_rng(spec.master_seed, ExperimentKind::ContractionScan, d, n, 0);
        let z = match spec.z_nd {
            Some(z) => z,
            None => sample_standard_normal(n, d, &rng)?.z_nd(),
        };
        let op = PopulationOperator::pseudo(z, d)?;
        let (lo, hi) = if d == 1 {
            (3.0 * nf.powf(-1.0 / 12.0 + beta), 0.1)
        } else {
            (5.0 * (d as f64 / nf).powf(0.25 + beta), 0.125)
        };
        let grid = linear_grid(lo, hi, points);
        if grid.is_empty() {
            notes.push(format!(
                "d = {d}: range [{lo:.4}, {hi}] is empty at n = {n}, beta = {beta}"
            ));
            continue;
        }
        let new = if d == 1 {
            contraction_rows(
                &op,
                OperatorKind::Pseudo,
                n,
                &grid,
                univariate_contraction_bounds,
                &quad,
            )?
        } else {
            contraction_rows(
                &op,
                OperatorKind::Pseudo,
                n,
                &grid,
                |r| multivariate_contraction_bounds(r, d),
                &quad,
            )?
        };
        rows.extend(new);
    }
    let corrected = PopulationOperator::corrected(1)?;
    let grid = linear_grid(0.15 / points as f64, 0.15, points);
    rows.extend(contraction_rows(
        &corrected,
        OperatorKind::Corrected,
        n,
        &grid,
        corrected_contraction_bounds,
        &quad,
    )?);
    Ok(ContractionScan { rows, notes })
}

/// Perturbation scans for every `(d, n)`; radii default to 12 log-spaced
/// values in `[0.02, 0.3]` (pseudo) or `[0.02, 2 n^{-1/16}]` (corrected).
pub fn run_perturbation(
    spec: &ExperimentSpec,
) -> Result<Vec<(PerturbationTable, Option<RateFit>)>> {
    spec.validate()?;
    let kind = spec.operator.unwrap_or(OperatorKind::Pseudo);
    let mut out = Vec::new();
    for d in spec.dims() {
        for n in spec.ns() {
            let radii = spec.radii.clone().unwrap_or_else(|| match kind {
                OperatorKind::Pseudo => log_grid(0.02, 0.3, 12),
                OperatorKind::Corrected => log_grid(0.02, 2.0 * (n as f64).powf(-1.0 / 16.0), 12),
            });
            let mut ps = PerturbationSpec::new(
                kind,
                radii,
                n,
                d,
                spec.trials(),
                trial_rng(spec.master_seed, ExperimentKind::PerturbationScan, d, n, 0),
            );
            if let Some(g) = spec.grid_points {
                ps.grid_points = g;
            }
            let table = with_pool(|| perturbation_scan(&ps))??;
            let fit = perturbation_fit(&table)?;
            out.push((table, fit));
        }
    }
    Ok(out)
}

/// Log-log slope of the mean sup-deviation against `r` over evaluated radii.
pub fn perturbation_fit(table: &PerturbationTable) -> Result<Option<RateFit>> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .filter(|r| r.trials > 0 && r.mean_sup_dev > 0.0)
        .map(|r| (r.r, r.mean_sup_dev))
        .unzip();
    if xs.len() < 3 {
        return Ok(None);
    }
    Ok(Some(rate_fit(&xs, &ys)?))
}

pub fn run_surface(spec: &ExperimentSpec) -> Result<Vec<SurfaceScan>> {
    let grid = spec
        .theta_grid
        .clone()
        .unwrap_or_else(|| log_grid(0.05, 0.3, 16));
    let modes = match spec.surface_mode {
        Some(m) => vec![m],
        None => vec![SurfaceMode::LocationOnly, SurfaceMode::LocationScaleCoupled],
    };
    let quad = QuadratureSpec::default();
    modes
        .into_iter()
        .map(|m| likelihood_surface_scan(m, &grid, &quad))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HellingerRow {
    pub theta1: f64,
    pub v1: f64,
    pub theta2: f64,
    pub v2: f64,
    pub hellinger: f64,
}

pub fn run_hellinger(spec: &ExperimentSpec) -> Result<(Vec<HellingerRow>, RateFit)> {
    let grid = spec
        .theta_grid
        .clone()
        .unwrap_or_else(|| log_grid(0.02, 0.1, 9));
    let base = spec.base_v2.unwrap_or(1.0);
    let fit = hellinger_exponent_fit(&grid, base)?;
    let rows = grid
        .iter()
        .map(|&t| {
            let pair = minimax_pair(t, base)?;
            Ok(HellingerRow {
                theta1: pair.eta1.0,
                v1: pair.eta1.1,
                theta2: pair.eta2.0,
                v2: pair.eta2.1,
                hellinger: pair.hellinger()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((rows, fit))
}

pub fn run_recursion(spec: &ExperimentSpec) -> Result<Vec<RecursionTrace>> {
    let steps = spec.steps.unwrap_or(200);
    let kinds = match spec.recursion {
        Some(k) => vec![k],
        None => RecursionKind::ALL.to_vec(),
    };
    kinds
        .into_iter()
        .map(|k| {
            let a0 = spec.a0.unwrap_or(match k {
                RecursionKind::MultivariateAlpha => 0.0,
                _ => 1.0 / 16.0,
            });
            localization_recursion(k, a0, steps)
        })
        .collect()
}

pub fn run_moments(spec: &ExperimentSpec) -> Result<MomentCheck> {
    spec.validate()?;
    let k = spec.moment_k.unwrap_or(2);
    let rng = trial_rng(
        spec.master_seed,
        ExperimentKind::MomentConcentration,
        1,
        k as usize,
        0,
    );
    with_pool(|| moment_concentration_check(k, &spec.ns(), spec.trials(), &rng))?
}

/// Everything an experiment can produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentOutput {
    Rates(RateTable),
    PopulationDecay {
        rows: Vec<DecayRow>,
    },
    ContractionScan(ContractionScan),
    PerturbationScan {
        scans: Vec<PerturbationOutput>,
    },
    LikelihoodSurface {
        scans: Vec<SurfaceOutput>,
    },
    HellingerExponent {
        rows: Vec<HellingerRow>,
        fit: RateFit,
    },
    Recursion {
        traces: Vec<RecursionTrace>,
    },
    MomentConcentration(MomentOutput),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationOutput {
    pub operator: OperatorKind,
    pub d: usize,
    pub n: usize,
    pub rows: Vec<crate::population::PerturbationRow>,
    pub skipped: usize,
    pub fit: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceOutput {
    pub mode: SurfaceMode,
    pub rows: Vec<crate::stats::SurfaceRow>,
    pub fit: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentOutput {
    pub k: u32,
    pub target: f64,
    pub rows: Vec<crate::theory::MomentRow>,
    pub fit: Option<RateFit>,
}

/// Runs the experiment named in `spec`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    Ok(match spec.experiment {
        ExperimentKind::Rates => ExperimentOutput::Rates(run_rate_experiment(spec)?),
        ExperimentKind::PopulationDecay => ExperimentOutput::PopulationDecay {
            rows: run_population_decay(spec)?,
        },
        ExperimentKind::ContractionScan => {
            ExperimentOutput::ContractionScan(run_contraction_scan(spec)?)
        }
        ExperimentKind::PerturbationScan => ExperimentOutput::PerturbationScan {
            scans: run_perturbation(spec)?
                .into_iter()
                .map(|(t, fit)| PerturbationOutput {
                    operator: t.operator,
                    d: t.d,
                    n: t.n,
                    rows: t.rows,
                    skipped: t.skipped,
                    fit,
                })
                .collect(),
        },
        ExperimentKind::LikelihoodSurface => ExperimentOutput::LikelihoodSurface {
            scans: run_surface(spec)?
                .into_iter()
                .map(|s| SurfaceOutput {
                    mode: s.mode,
                    rows: s.rows,
                    fit: s.fit,
                })
                .collect(),
        },
        ExperimentKind::HellingerExponent => {
            let (rows, fit) = run_hellinger(spec)?;
            ExperimentOutput::HellingerExponent { rows, fit }
        }
        ExperimentKind::Recursion => ExperimentOutput::Recursion {
            traces: run_recursion(spec)?,
        },
        ExperimentKind::MomentConcentration => {
            let m = run_moments(spec)?;
            ExperimentOutput::MomentConcentration(MomentOutput {
                k: m.k,
                target: m.target,
                rows: m.rows,
                fit: m.fit,
            })
        }
    })
}

/// Shortest decimal that parses back to the same `f64` (at most 17
/// significant digits); scientific notation outside `[1e-5, 1e16)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn write_table(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header.split(','))?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Path of the aggregate table written next to a rates CSV:
/// `r.csv` → `r.aggregates.csv`.
pub fn aggregates_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "rates".into());
    path.with_file_name(format!("{stem}.aggregates.csv"))
}

impl ExperimentOutput {
    /// CSV header and rows of the primary table.
    pub fn csv_table(&self) -> (&'static str, Vec<Vec<String>>) {
        let f = fmt_f64;
        match self {
            ExperimentOutput::Rates(t) => (
                RATES_HEADER,
                t.trials
                    .iter()
                    .map(|r| {
                        vec![
                            r.experiment.name().into(),
                            r.fit.name().into(),
                            r.d.to_string(),
                            r.n.to_string(),
                            r.trial.to_string(),
                            f(r.loc_error),
                            f(r.scale_error),
                            r.iters.to_string(),
                            r.clamped.to_string(),
                            r.seed.to_string(),
                        ]
                    })
                    .collect(),
            ),
            ExperimentOutput::PopulationDecay { rows } => (
                DECAY_HEADER,
                rows.iter()
                    .map(|r| {
                        vec![
                            r.d.to_string(),
                            r.t.to_string(),
                            f(r.theta_norm),
                            f(r.surrogate),
                        ]
                    })
                    .collect(),
            ),
            ExperimentOutput::ContractionScan(s) => (
                CONTRACTION_HEADER,
                s.rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.operator.name().into(),
                            r.d.to_string(),
                            r.n.to_string(),
                            f(r.z_nd),
                            f(r.theta_norm),
                            f(r.ratio),
                            f(r.lower),
                            f(r.upper),
                            r.inside.to_string(),
                        ]
                    })
                    .collect(),
            ),
            ExperimentOutput::PerturbationScan { scans } => (
                PERTURBATION_HEADER,
                scans
                    .iter()
                    .flat_map(|s| {
                        s.rows.iter().map(move |r| {
                            vec![
                                s.operator.name().into(),
                                s.d.to_string(),
                                s.n.to_string(),
                                f(r.r),
                                f(r.mean_sup_dev),
                                f(r.stderr),
                            ]
                        })
                    })
                    .collect(),
            ),
            ExperimentOutput::LikelihoodSurface { scans } => (
                SURFACE_HEADER,
                scans
                    .iter()
                    .flat_map(|s| {
                        s.rows
                            .iter()
                            .map(move |r| vec![s.mode.name().into(), f(r.theta), f(r.gap)])
                    })
                    .collect(),
            ),
            ExperimentOutput::HellingerExponent { rows, .. } => (
                HELLINGER_HEADER,
                rows.iter()
                    .map(|r| vec![f(r.theta1), f(r.v1), f(r.theta2), f(r.v2), f(r.hellinger)])
                    .collect(),
            ),
            ExperimentOutput::Recursion { traces } => (
                RECURSION_HEADER,
                traces
                    .iter()
                    .flat_map(|t| {
                        t.values.iter().enumerate().map(move |(i, v)| {
                            vec![t.kind.name().into(), i.to_string(), f(*v), f(t.fixed_point)]
                        })
                    })
                    .collect(),
            ),
            ExperimentOutput::MomentConcentration(m) => (
                MOMENTS_HEADER,
                m.rows
                    .iter()
                    .map(|r| {
                        vec![
                            m.k.to_string(),
                            r.n.to_string(),
                            f(r.mean_abs_dev),
                            f(r.stderr),
                        ]
                    })
                    .collect(),
            ),
        }
    }

    /// Writes the primary CSV table to `path`; rates additionally write their
    /// aggregates to [`aggregates_path`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let (header, rows) = self.csv_table();
        write_table(path, header, &rows)?;
        if let ExperimentOutput::Rates(t) = self {
            let rows: Vec<Vec<String>> = t
                .aggregates
                .iter()
                .map(|a| {
                    vec![
                        a.fit.name().into(),
                        a.d.to_string(),
                        a.n.to_string(),
                        fmt_f64(a.mean_loc_error),
                        fmt_f64(a.stderr),
                        fmt_f64(a.median_loc_error),
                        fmt_f64(a.mean_scale_error),
                    ]
                })
                .collect();
            write_table(&aggregates_path(path), AGGREGATES_HEADER, &rows)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut file = File::create(path)?;
        file.write_all(self.to_json()?.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    /// Short text summary: fitted exponents, fixed points, notes.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let fit_line = |label: String, fit: &RateFit| {
            format!(
                "{label}: slope {:.4} (stderr {:.4}, r² {:.4})\n",
                fit.slope, fit.stderr_slope, fit.r_squared
            )
        };
        match self {
            ExperimentOutput::Rates(t) => {
                for a in &t.aggregates {
                    out += &format!(
                        "{} d={} n={}: mean loc error {:.5} ± {:.5}, median {:.5}, scale {:.5}{}\n",
                        a.fit,
                        a.d,
                        a.n,
                        a.mean_loc_error,
                        a.stderr,
                        a.median_loc_error,
                        a.mean_scale_error,
                        if a.failed > 0 {
                            format!(" ({} failed)", a.failed)
                        } else {
                            String::new()
                        }
                    );
                }
                for f in &t.fits {
                    out += &fit_line(format!("{} d={} location", t.fit, f.d), &f.location);
                    out += &fit_line(format!("{} d={} scale", t.fit, f.d), &f.scale);
                }
            }
            ExperimentOutput::PopulationDecay { rows } => {
                for r in rows
                    .iter()
                    .filter(|r| r.t > 0 && r.t.is_power_of_two() || r.t == 0)
                {
                    out += &format!(
                        "d={} t={}: |θ_t| = {:.6}, surrogate {:.6}\n",
                        r.d, r.t, r.theta_norm, r.surrogate
                    );
                }
            }
            ExperimentOutput::ContractionScan(s) => {
                for note in &s.notes {
                    out += &format!("note: {note}\n");
                }
                let outside = s.rows.iter().filter(|r| !r.inside).count();
                out += &format!(
                    "{} ratios, {} outside their interval\n",
                    s.rows.len(),
                    outside
                );
                for r in s.rows.iter().filter(|r| !r.inside) {
                    out += &format!(
                        "  {} d={} |θ|={:.4}: ratio - 1 = {:.4e}, interval - 1 = [{:.4e}, {:.4e}]\n",
                        r.operator.name(),
                        r.d,
                        r.theta_norm,
                        r.ratio - 1.0,
                        r.lower - 1.0,
                        r.upper - 1.0
                    );
                }
            }
            ExperimentOutput::PerturbationScan { scans } => {
                for s in scans {
                    out += &format!(
                        "{} d={} n={}: {} (trial, radius) pairs skipped\n",
                        s.operator.name(),
                        s.d,
                        s.n,
                        s.skipped
                    );
                    if let Some(fit) = &s.fit {
                        out += &fit_line(format!("{} d={} n={}", s.operator.name(), s.d, s.n), fit);
                    }
                }
            }
            ExperimentOutput::LikelihoodSurface { scans } => {
                for s in scans {
                    if let Some(fit) = &s.fit {
                        out += &fit_line(s.mode.name().to_string(), fit);
                    }
                }
            }
            ExperimentOutput::HellingerExponent { fit, .. } => {
                out += &fit_line("hellinger vs theta1".into(), fit);
            }
            ExperimentOutput::Recursion { traces } => {
                for t in traces {
                    out += &format!(
                        "{}: a_{} = {}, fixed point {}\n",
                        t.kind.name(),
                        t.values.len() - 1,
                        fmt_f64(t.values.last().copied().unwrap_or(f64::NAN)),
                        fmt_f64(t.fixed_point)
                    );
                }
            }
            ExperimentOutput::MomentConcentration(m) => {
                if let Some(fit) = &m.fit {
                    out += &fit_line(format!("moment k={}", m.k), fit);
                }
            }
        }
        out
    }

    /// Checks the acceptance thresholds that apply to this output.
    pub fn check_thresholds(&self) -> Result<()> {
        let within = |label: &str, v: f64, lo: f64, hi: f64| {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(Error::Threshold(format!(
                    "{label} = {v:.4} outside [{lo}, {hi}]"
                )))
            }
        };
        let need = |fit: &Option<RateFit>, label: &str| {
            fit.ok_or_else(|| Error::Threshold(format!("{label}: too few points for a fit")))
        };
        match self {
            ExperimentOutput::Rates(t) => {
                if t.fits.is_empty() {
                    return Err(Error::Threshold("rates: need at least three ns".into()));
                }
                for f in &t.fits {
                    let (lo, hi) = match (t.fit, f.d) {
                        (FitFamily::Isotropic, 1) => (-0.165, -0.09),
                        (FitFamily::Isotropic, _) => (-0.30, -0.20),
                        (FitFamily::TiedDiagonal, _) => (-0.17, -0.08),
                        (FitFamily::FreeCovariance, _) => (-0.17, -0.08),
                    };
                    within(
                        &format!("{} d={} slope", t.fit, f.d),
                        f.location.slope,
                        lo,
                        hi,
                    )?;
                }
                Ok(())
            }
            ExperimentOutput::PopulationDecay { rows } => {
                if rows.iter().all(|r| r.theta_norm.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Threshold("non-finite decay iterate".into()))
                }
            }
            ExperimentOutput::ContractionScan(s) => match s.rows.iter().find(|r| !r.inside) {
                None => Ok(()),
                Some(r) => Err(Error::Threshold(format!(
                    "{} d={} ratio at |θ| = {} outside [{}, {}]",
                    r.operator.name(),
                    r.d,
                    r.theta_norm,
                    r.lower,
                    r.upper
                ))),
            },
            ExperimentOutput::PerturbationScan { scans } => {
                for s in scans {
                    let fit = need(&s.fit, "perturbation")?;
                    let (lo, hi) = match s.operator {
                        OperatorKind::Pseudo => (0.75, 1.25),
                        OperatorKind::Corrected => (2.6, 3.4),
                    };
                    within(
                        &format!("{} exponent", s.operator.name()),
                        fit.slope,
                        lo,
                        hi,
                    )?;
                }
                Ok(())
            }
            ExperimentOutput::LikelihoodSurface { scans } => {
                for s in scans {
                    let fit = need(&s.fit, s.mode.name())?;
                    let target = match s.mode {
                        SurfaceMode::LocationOnly => 4.0,
                        SurfaceMode::LocationScaleCoupled => 8.0,
                    };
                    within(s.mode.name(), fit.slope, target - 0.5, target + 0.5)?;
                }
                Ok(())
            }
            ExperimentOutput::HellingerExponent { fit, .. } => {
                within("hellinger exponent", fit.slope, 7.5, 8.5)
            }
            ExperimentOutput::Recursion { traces } => {
                for t in traces {
                    let last = *t.values.last().expect("recursion has values");
                    if (last - t.fixed_point).abs() > 1e-9 {
                        return Err(Error::Threshold(format!(
                            "{}: {last} not within 1e-9 of {}",
                            t.kind.name(),
                            t.fixed_point
                        )));
                    }
                }
                Ok(())
            }
            ExperimentOutput::MomentConcentration(m) => {
                let fit = need(&m.fit, "moments")?;
                within("moment exponent", fit.slope, -0.6, -0.4)
            }
        }
    }

    /// Writes to `path` in `format`.
    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(path),
            OutputFormat::Json => self.write_json(path),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-12, 123456.789, 2.5e20, -7.25e-7, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(1e-12), "1e-12");
    }

    #[test]
    fn spec_json_defaults_and_validation() {
        let spec =
            ExperimentSpec::from_json(r#"{"experiment": "rates", "dims": [2], "ns": [64, 128]}"#)
                .unwrap();
        assert_eq!(spec.fit, FitFamily::Isotropic);
        assert_eq!(spec.trials(), 200);
        assert_eq!(spec.init_radius, 0.1);
        spec.validate().unwrap();
        let bad = ExperimentSpec::from_json(r#"{"experiment": "rates", "ns": [128, 64]}"#).unwrap();
        assert!(matches!(bad.validate(), Err(Error::Argument(_))));
        assert!(ExperimentSpec::from_json(r#"{"experiment": "rates", "bogus": 1}"#).is_err());
        assert_eq!(
            ExperimentSpec::new(ExperimentKind::Rates).ns(),
            default_rate_ns()
        );
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn trial_streams_are_distinct() {
        let a = trial_rng(1, ExperimentKind::Rates, 1, 1024, 0);
        let b = trial_rng(1, ExperimentKind::Rates, 1, 1024, 1);
        let c = trial_rng(1, ExperimentKind::Rates, 2, 1024, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, trial_rng(1, ExperimentKind::Rates, 1, 1024, 0));
    }

    #[test]
    fn empty_range_is_reported() {
        let mut spec = ExperimentSpec::new(ExperimentKind::ContractionScan);
        spec.ns = Some(vec![10_000]);
        spec.dims = Some(vec![1]);
        let scan = run_contraction_scan(&spec).unwrap();
        assert_eq!(scan.notes.len(), 1);
        assert!(scan
            .rows
            .iter()
            .all(|r| r.operator == OperatorKind::Corrected));
    }

    #[test]
    fn aggregates_path_sits_next_to_output() {
        assert_eq!(
            aggregates_path(Path::new("/tmp/x/r.csv")),
            PathBuf::from("/tmp/x/r.aggregates.csv")
        );
    }
}
