//! EM for the three two-component fits.
//!
//! The symmetric fits keep the scale slaved to the location after every
//! step: `σ'² = Z_{n,d} - ‖θ'‖²/d` for the isotropic fit and
//! `v'_k = (1/n) Σ X_{ik}² - θ'_k²` per coordinate for the tied-diagonal fit.
//! Variances that would drop below [`SIGMA2_FLOOR`] are clamped and flagged
//! rather than aborting the run.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{tanh_map, TanhKernel};
use crate::model::{
    log_add_exp, DataSet, FitFamily, FitParams, FreeCovParams, IsoParams, Mixture, TiedDiagParams,
    SIGMA2_FLOOR,
};
use crate::rng::RngSpec;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// When to stop iterating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once `‖θ_{t+1} - θ_t‖` is at most this.
    pub tol_theta: f64,
    pub max_iters: usize,
}

impl StopRule {
    pub fn new(tol_theta: f64, max_iters: usize) -> Result<Self> {
        let rule = Self {
            tol_theta,
            max_iters,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_theta > 0.0) {
            return Err(Error::arg("tol_theta must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::arg("max_iters must be at least 1"));
        }
        Ok(())
    }

    /// `⌈20 n^{3/4} log n⌉` for slow fits and `⌈20 √(n/d) log n⌉` otherwise,
    /// with `tol_theta = 1e-9`.
    ///
    /// The univariate isotropic fit and the tied-diagonal fit in any
    /// dimension are slow; both contract like `1 - cθ⁶` near the truth.
    pub fn default_for(family: FitFamily, n: usize, d: usize) -> Self {
        let nf = n as f64;
        let log_n = nf.ln().max(1.0);
        let slow = d == 1 || family == FitFamily::TiedDiagonal;
        let cap = if slow {
            20.0 * nf.powf(0.75) * log_n
        } else {
            20.0 * (nf / d as f64).sqrt() * log_n
        };
        Self {
            tol_theta: 1e-9,
            max_iters: (cap.ceil() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

/// How much of a run to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    /// Every iterate, its log-likelihood and every step norm.
    #[default]
    Full,
    /// Only the initial and final iterates with their log-likelihoods and the
    /// last step norm.
    Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmOptions {
    pub recording: Recording,
    /// Allow the interpolated location map for the symmetric fits in one and
    /// two dimensions; see [`crate::kernel`].
    pub accelerate: bool,
}

impl EmOptions {
    /// Summary recording with acceleration, as used by the experiments.
    pub fn fast() -> Self {
        Self {
            recording: Recording::Summary,
            accelerate: true,
        }
    }
}

/// The recorded EM run.
#[derive(Debug, Clone)]
pub struct EmTrajectory {
    pub iterates: Vec<FitParams>,
    pub loglik: Vec<f64>,
    pub step_norms: Vec<f64>,
    pub stopped_reason: StopReason,
    /// Number of EM steps taken.
    pub iterations: usize,
    /// Whether any variance was clamped at the floor.
    pub clamped: bool,
}

impl EmTrajectory {
    pub fn final_params(&self) -> &FitParams {
        self.iterates
            .last()
            .expect("a trajectory holds at least one iterate")
    }
}

/// Result of one EM step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<P> {
    pub params: P,
    pub clamped: bool,
}

/// `Q_n(candidate; current)`: expected complete-data log-likelihood of the
/// isotropic fit under the responsibilities of `current`.
pub fn q_function(candidate: &IsoParams, current: &IsoParams, data: &DataSet) -> Result<f64> {
    let d = data.d();
    if candidate.dim() != d || current.dim() != d {
        return Err(Error::arg("parameter and data dimensions differ"));
    }
    let s2 = candidate.sigma2();
    let tc = candidate.theta();
    let tc_sq = dot(tc, tc);
    let norm = -(d as f64) * (HALF_LN_2PI + 0.5 * s2.ln());
    let mut total = 0.0;
    for (row, &sq) in data.rows().zip(data.sq_norms()) {
        let w = current.weight(row)?;
        let cross = dot(row, tc);
        let plus = sq - 2.0 * cross + tc_sq;
        let minus = sq + 2.0 * cross + tc_sq;
        total += norm - (w * plus + (1.0 - w) * minus) / (2.0 * s2);
    }
    Ok(total / data.n() as f64)
}

/// Denominator `Z_{n,d} - ‖θ‖²/d` of the isotropic update.
fn slaved_scale(theta: &[f64], z_nd: f64) -> Result<f64> {
    let d = theta.len() as f64;
    let s = z_nd - dot(theta, theta) / d;
    if !(s > 0.0) {
        return Err(Error::domain(format!(
            "‖θ‖²/d = {} is not below Z_n,d = {z_nd}",
            dot(theta, theta) / d
        )));
    }
    Ok(s)
}

fn iso_update<F>(theta: &[f64], z_nd: f64, map: F) -> Result<(Vec<f64>, f64, bool)>
where
    F: FnOnce(&[f64]) -> Vec<f64>,
{
    let s = slaved_scale(theta, z_nd)?;
    let a: Vec<f64> = theta.iter().map(|t| t / s).collect();
    let next = map(&a);
    let raw = z_nd - dot(&next, &next) / theta.len() as f64;
    let clamped = raw < SIGMA2_FLOOR;
    Ok((next, if clamped { SIGMA2_FLOOR } else { raw }, clamped))
}

fn tied_update<F>(
    theta: &[f64],
    vars: &[f64],
    second_moments: &[f64],
    z_nd: f64,
    map: F,
) -> Result<(Vec<f64>, Vec<f64>, bool)>
where
    F: FnOnce(&[f64]) -> Vec<f64>,
{
    slaved_scale(theta, z_nd)?;
    let a: Vec<f64> = theta.iter().zip(vars).map(|(t, v)| t / v).collect();
    let next = map(&a);
    let mut clamped = false;
    let new_vars = next
        .iter()
        .zip(second_moments)
        .map(|(t, m)| {
            let raw = m - t * t;
            if raw < SIGMA2_FLOOR {
                clamped = true;
                SIGMA2_FLOOR
            } else {
                raw
            }
        })
        .collect();
    Ok((next, new_vars, clamped))
}

/// One EM step of the isotropic fit:
/// `θ' = (1/n) Σ X_i tanh(X_iᵀθ / (Z_{n,d} - ‖θ‖²/d))`, `σ'² = Z_{n,d} - ‖θ'‖²/d`.
///
/// The update depends on `current` only through `θ`; its variance is assumed
/// to be the slaved value, which holds for every iterate after the first.
pub fn em_step_isotropic(current: &IsoParams, data: &DataSet) -> Result<Step<IsoParams>> {
    if current.dim() != data.d() {
        return Err(Error::arg("parameter and data dimensions differ"));
    }
    let (theta, sigma2, clamped) = iso_update(current.theta(), data.z_nd(), |a| tanh_map(data, a))?;
    Ok(Step {
        params: IsoParams::new(theta, sigma2).map_err(|e| Error::domain(e.to_string()))?,
        clamped,
    })
}

/// One EM step of the tied-diagonal fit: responsibilities use `Σ⁻¹θ`, then
/// `θ' = (1/n) Σ (2w_i - 1) X_i` and `v'_k = (1/n) Σ X_{ik}² - θ'_k²`.
pub fn em_step_tied_diagonal(
    current: &TiedDiagParams,
    data: &DataSet,
) -> Result<Step<TiedDiagParams>> {
    if current.dim() != data.d() {
        return Err(Error::arg("parameter and data dimensions differ"));
    }
    let m2 = data.coordinate_second_moments();
    let (theta, vars, clamped) = tied_update(
        current.theta(),
        current.diag_vars(),
        &m2,
        data.z_nd(),
        |a| tanh_map(data, a),
    )?;
    Ok(Step {
        params: TiedDiagParams::new(theta, vars).map_err(|e| Error::domain(e.to_string()))?,
        clamped,
    })
}

/// Row-normalised responsibilities `r_ik ∝ w_k φ(x_i; μ_k, Σ_k)`.
pub fn responsibilities(params: &FreeCovParams, data: &DataSet) -> Result<Vec<[f64; 2]>> {
    if params.dim() != data.d() {
        return Err(Error::arg("parameter and data dimensions differ"));
    }
    let comps = params.components()?;
    let w = params.weights();
    Ok(data
        .rows()
        .map(|row| {
            let a = w[0].ln() + comps[0].log_pdf(row);
            let b = w[1].ln() + comps[1].log_pdf(row);
            let lse = log_add_exp(a, b);
            let r0 = (a - lse).exp();
            [r0, 1.0 - r0]
        })
        .collect())
}

/// One EM step of the unconstrained two-component fit.
///
/// Covariances are symmetrised and their eigenvalues floored at
/// [`SIGMA2_FLOOR`]; a component whose responsibility mass vanishes is an
/// error.
pub fn em_step_free(current: &FreeCovParams, data: &DataSet) -> Result<Step<FreeCovParams>> {
    let resp = responsibilities(current, data)?;
    let n = data.n() as f64;
    let d = data.d();
    let mut weights = [0.0; 2];
    let mut means = [DVector::zeros(d), DVector::zeros(d)];
    let mut covs = [DMatrix::zeros(d, d), DMatrix::zeros(d, d)];
    let mut clamped = false;
    for k in 0..2 {
        let mass: f64 = resp.iter().map(|r| r[k]).sum();
        if !(mass > 1e-12 * n) {
            return Err(Error::ComponentCollapse { component: k, mass });
        }
        let mut mean = DVector::zeros(d);
        for (row, r) in data.rows().zip(&resp) {
            mean.axpy(r[k], &DVector::from_column_slice(row), 1.0);
        }
        mean /= mass;
        let mut cov = DMatrix::zeros(d, d);
        for (row, r) in data.rows().zip(&resp) {
            let diff = DVector::from_column_slice(row) - &mean;
            cov.ger(r[k], &diff, &diff, 1.0);
        }
        cov /= mass;
        let sym = (&cov + cov.transpose()) * 0.5;
        let mut eig = SymmetricEigen::new(sym);
        for v in eig.eigenvalues.iter_mut() {
            if *v < SIGMA2_FLOOR {
                *v = SIGMA2_FLOOR;
                clamped = true;
            }
        }
        let rebuilt = eig.recompose();
        weights[k] = mass / n;
        means[k] = mean;
        covs[k] = (&rebuilt + rebuilt.transpose()) * 0.5;
    }
    // renormalise so the simplex constraint holds to rounding
    let total = weights[0] + weights[1];
    weights = [weights[0] / total, 1.0 - weights[0] / total];
    Ok(Step {
        params: FreeCovParams::new(weights, means, covs)
            .map_err(|e| Error::domain(e.to_string()))?,
        clamped,
    })
}

/// A uniformly random point on the sphere of the given radius in `R^d`.
pub fn random_on_sphere(d: usize, radius: f64, rng: &RngSpec) -> Vec<f64> {
    let mut gen = rng.rng();
    loop {
        let v: Vec<f64> = (0..d).map(|_| gen.sample(StandardNormal)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|x| x * radius / norm).collect();
        }
    }
}

/// Initial parameters with location `theta0` and scales from the M-step
/// formulas at `theta0`.
pub fn initial_params(family: FitFamily, theta0: &[f64], data: &DataSet) -> Result<FitParams> {
    if theta0.len() != data.d() {
        return Err(Error::arg("initial location and data dimensions differ"));
    }
    let d = data.d();
    let s = slaved_scale(theta0, data.z_nd())?.max(SIGMA2_FLOOR);
    Ok(match family {
        FitFamily::Isotropic => FitParams::Isotropic(IsoParams::new(theta0.to_vec(), s)?),
        FitFamily::TiedDiagonal => {
            let vars = data
                .coordinate_second_moments()
                .iter()
                .zip(theta0)
                .map(|(m, t)| (m - t * t).max(SIGMA2_FLOOR))
                .collect();
            FitParams::TiedDiagonal(TiedDiagParams::new(theta0.to_vec(), vars)?)
        }
        FitFamily::FreeCovariance => {
            let cov = DMatrix::identity(d, d) * s;
            let m = DVector::from_column_slice(theta0);
            FitParams::FreeCovariance(FreeCovParams::new(
                [0.5, 0.5],
                [m.clone(), -m],
                [cov.clone(), cov],
            )?)
        }
    })
}

/// Runs EM from `init` with full recording and direct evaluation.
pub fn run_em(init: &FitParams, data: &DataSet, stop: &StopRule) -> Result<EmTrajectory> {
    run_em_with(init, data, stop, &EmOptions::default())
}

/// Runs EM from `init` until the location step is at most `stop.tol_theta`
/// or `stop.max_iters` steps were taken.
pub fn run_em_with(
    init: &FitParams,
    data: &DataSet,
    stop: &StopRule,
    options: &EmOptions,
) -> Result<EmTrajectory> {
    stop.validate()?;
    if init.dim() != data.d() {
        return Err(Error::arg("initial parameters and data dimensions differ"));
    }
    let wrap = |iteration: usize| {
        move |e: Error| Error::Step {
            iteration,
            source: Box::new(e),
        }
    };
    let full = options.recording == Recording::Full;
    let mut traj = EmTrajectory {
        iterates: vec![init.clone()],
        loglik: vec![init.log_likelihood(data)?],
        step_norms: Vec::new(),
        stopped_reason: StopReason::MaxIters,
        iterations: 0,
        clamped: false,
    };
    let mut kernel = TanhKernel::new(data, options.accelerate);
    let m2 = data.coordinate_second_moments();
    let mut current = init.clone();
    let mut last_step = f64::NAN;
    for t in 0..stop.max_iters {
        let (next, clamped) = match &current {
            FitParams::Isotropic(p) => {
                let (theta, sigma2, clamped) =
                    iso_update(p.theta(), data.z_nd(), |a| kernel.eval(a)).map_err(wrap(t))?;
                let params = IsoParams::new(theta, sigma2)
                    .map_err(|e| Error::domain(e.to_string()))
                    .map_err(wrap(t))?;
                (FitParams::Isotropic(params), clamped)
            }
            FitParams::TiedDiagonal(p) => {
                let (theta, vars, clamped) =
                    tied_update(p.theta(), p.diag_vars(), &m2, data.z_nd(), |a| {
                        kernel.eval(a)
                    })
                    .map_err(wrap(t))?;
                let params = TiedDiagParams::new(theta, vars)
                    .map_err(|e| Error::domain(e.to_string()))
                    .map_err(wrap(t))?;
                (FitParams::TiedDiagonal(params), clamped)
            }
            FitParams::FreeCovariance(p) => {
                let step = em_step_free(p, data).map_err(wrap(t))?;
                (FitParams::FreeCovariance(step.params), step.clamped)
            }
        };
        traj.clamped |= clamped;
        last_step = dist(&next.location(), &current.location());
        traj.iterations = t + 1;
        if full {
            traj.loglik
                .push(next.log_likelihood(data).map_err(wrap(t))?);
            traj.step_norms.push(last_step);
            traj.iterates.push(next.clone());
        }
        current = next;
        if last_step <= stop.tol_theta {
            traj.stopped_reason = StopReason::Converged;
            break;
        }
    }
    if !full {
        traj.loglik.push(current.log_likelihood(data)?);
        traj.step_norms.push(last_step);
        traj.iterates.push(current);
    }
    Ok(traj)
}
