//! Distances between univariate mixtures, the two-point construction behind
//! the minimax lower bound, log-log rate fits and likelihood-surface scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ln_cosh, FitParams};
use crate::quadrature::QuadratureSpec;

/// Integration window for all one-dimensional density integrals.
pub const INTEGRATION_LIMIT: f64 = 30.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// The symmetric mixture `½ N(-θ, v) + ½ N(θ, v)` on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMixture1D {
    pub theta: f64,
    pub v: f64,
}

impl SymmetricMixture1D {
    pub fn new(theta: f64, v: f64) -> Result<Self> {
        if !theta.is_finite() || !(v > 0.0) || !v.is_finite() {
            return Err(Error::arg(format!(
                "invalid mixture (θ = {theta}, v = {v})"
            )));
        }
        Ok(Self { theta, v })
    }

    pub fn density(&self, x: f64) -> f64 {
        let s = self.v.sqrt();
        let a = (x - self.theta) / s;
        let b = (x + self.theta) / s;
        0.5 * INV_SQRT_2PI / s * ((-0.5 * a * a).exp() + (-0.5 * b * b).exp())
    }

    /// `ln p(x) - ln q(x)` for `p = self`, arranged so that nearby parameter
    /// pairs keep full relative accuracy in the difference.
    pub fn log_ratio(&self, other: &Self, x: f64) -> f64 {
        let (t1, v1, t2, v2) = (self.theta, self.v, other.theta, other.v);
        let dv = v1 - v2;
        -0.5 * (dv / v2).ln_1p() + x * x * dv / (2.0 * v1 * v2) - t1 * t1 / (2.0 * v1)
            + t2 * t2 / (2.0 * v2)
            + ln_cosh(t1 * x / v1)
            - ln_cosh(t2 * x / v2)
    }
}

/// Adaptive Simpson settings: the window is first cut into `panels` equal
/// pieces, each refined until the Richardson error estimate is below its
/// share of `tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpsonSpec {
    pub panels: usize,
    pub tol: f64,
    pub max_depth: u32,
}

impl Default for SimpsonSpec {
    fn default() -> Self {
        Self {
            panels: 60,
            tol: 1e-12,
            max_depth: 40,
        }
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    spec: &SimpsonSpec,
) -> Result<f64> {
    if spec.panels == 0 || !(spec.tol > 0.0) || !(b > a) {
        return Err(Error::arg(
            "adaptive Simpson needs panels >= 1, tol > 0 and a < b",
        ));
    }
    let width = (b - a) / spec.panels as f64;
    let tol = spec.tol / spec.panels as f64;
    let mut total = 0.0;
    for p in 0..spec.panels {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == spec.panels { b } else { lo + width };
        let (flo, fhi, fmid) = (f(lo), f(hi), f(0.5 * (lo + hi)));
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += simpson_rec(&f, lo, hi, flo, fmid, fhi, whole, tol, spec.max_depth)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::numerical(format!(
            "adaptive Simpson did not converge on [{a}, {b}]"
        )));
    }
    Ok(
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}

/// Integrates a nonnegative integrand to a tolerance relative to its size:
/// a coarse pass fixes the scale, the second pass uses `tol · scale`.
fn integrate_scaled<F: Fn(f64) -> f64 + Copy>(f: F, spec: &SimpsonSpec) -> Result<f64> {
    let coarse_spec = SimpsonSpec { tol: 1e-3, ..*spec };
    let lim = INTEGRATION_LIMIT;
    let coarse = adaptive_simpson(f, -lim, lim, &coarse_spec)?.abs();
    if coarse == 0.0 {
        return Ok(0.0);
    }
    let fine = SimpsonSpec {
        tol: spec.tol * coarse.min(1.0),
        ..*spec
    };
    adaptive_simpson(f, -lim, lim, &fine)
}

/// Hellinger distance `h(p, q) = √(1 - ∫√(pq))`.
///
/// Evaluated as `√(½ ∫ (√p - √q)²)`, which is the same number without the
/// cancellation that would swamp distances below `1e-6`; the integral is
/// resolved to `tol` relative to its own size.
pub fn hellinger_distance(p: &SymmetricMixture1D, q: &SymmetricMixture1D) -> Result<f64> {
    hellinger_distance_with(p, q, &SimpsonSpec::default())
}

pub fn hellinger_distance_with(
    p: &SymmetricMixture1D,
    q: &SymmetricMixture1D,
    spec: &SimpsonSpec,
) -> Result<f64> {
    // (√p - √q)² = q · expm1(½ ln(p/q))²
    let integrand = |x: f64| {
        let e = (0.5 * p.log_ratio(q, x)).exp_m1();
        q.density(x) * e * e
    };
    let h2 = 0.5 * integrate_scaled(integrand, spec)?;
    Ok(h2.clamp(0.0, 1.0).sqrt())
}

/// Total variation distance `½ ∫ |p - q|`.
pub fn total_variation(p: &SymmetricMixture1D, q: &SymmetricMixture1D) -> Result<f64> {
    let v = 0.5
        * integrate_scaled(
            |x| q.density(x) * p.log_ratio(q, x).exp_m1().abs(),
            &SimpsonSpec::default(),
        )?;
    Ok(v.clamp(0.0, 1.0))
}

/// Two mixtures that agree to high order: `θ₂ = 2θ₁`, `v₁ - v₂ = 3θ₁²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimaxPair {
    pub eta1: (f64, f64),
    pub eta2: (f64, f64),
}

impl MinimaxPair {
    pub fn mixtures(&self) -> (SymmetricMixture1D, SymmetricMixture1D) {
        (
            SymmetricMixture1D {
                theta: self.eta1.0,
                v: self.eta1.1,
            },
            SymmetricMixture1D {
                theta: self.eta2.0,
                v: self.eta2.1,
            },
        )
    }

    /// `(|θ₁| - |θ₂|)² + |v₁ - v₂|`.
    pub fn parameter_distance(&self) -> f64 {
        (self.eta1.0.abs() - self.eta2.0.abs()).powi(2) + (self.eta1.1 - self.eta2.1).abs()
    }

    pub fn hellinger(&self) -> Result<f64> {
        let (p, q) = self.mixtures();
        hellinger_distance(&p, &q)
    }
}

pub fn minimax_pair(theta1: f64, base_v2: f64) -> Result<MinimaxPair> {
    if !(0.0..=0.3).contains(&theta1) {
        return Err(Error::arg(format!("θ₁ = {theta1} must lie in [0, 0.3]")));
    }
    if !(base_v2 > 0.0) || !base_v2.is_finite() {
        return Err(Error::arg("base variance must be positive"));
    }
    Ok(MinimaxPair {
        eta1: (theta1, base_v2 + 3.0 * theta1 * theta1),
        eta2: (2.0 * theta1, base_v2),
    })
}

/// Ordinary least squares of `ln y` on `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub r_squared: f64,
}

pub fn rate_fit(xs: &[f64], ys: &[f64]) -> Result<RateFit> {
    if xs.len() != ys.len() {
        return Err(Error::arg("rate fit needs equally many x and y values"));
    }
    if xs.len() < 3 {
        return Err(Error::arg("rate fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::arg("rate fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("rate fit needs at least two distinct x values"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        stderr_slope: (ss_res / (m - 2.0) / sxx).sqrt(),
        r_squared,
    })
}

/// Slope of `ln h` against `ln θ₁` along [`minimax_pair`]s.
pub fn hellinger_exponent_fit(theta1_grid: &[f64], base_v2: f64) -> Result<RateFit> {
    hellinger_exponent_fit_with(theta1_grid, base_v2, &SimpsonSpec::default())
}

pub fn hellinger_exponent_fit_with(
    theta1_grid: &[f64],
    base_v2: f64,
    spec: &SimpsonSpec,
) -> Result<RateFit> {
    if theta1_grid.len() < 5 {
        return Err(Error::arg(
            "Hellinger exponent fit needs at least 5 grid points",
        ));
    }
    if theta1_grid.iter().any(|t| !(*t > 0.0 && *t <= 0.15)) {
        return Err(Error::arg("θ₁ grid must lie in (0, 0.15]"));
    }
    let hs: Vec<f64> = theta1_grid
        .par_iter()
        .map(|&t| {
            let (p, q) = minimax_pair(t, base_v2)?.mixtures();
            hellinger_distance_with(&p, &q, spec)
        })
        .collect::<Result<_>>()?;
    rate_fit(theta1_grid, &hs)
}

/// Error of a fitted mixture against the truth `N(0, I_d)`.
///
/// Symmetric fits use `‖θ̂‖`; the free fit uses `(w₁‖μ̂₁‖² + w₂‖μ̂₂‖²)^{1/2}`.
pub fn location_error(params: &FitParams) -> f64 {
    match params {
        FitParams::Isotropic(p) => p.theta_norm(),
        FitParams::TiedDiagonal(p) => p.theta_norm(),
        FitParams::FreeCovariance(p) => p
            .weights()
            .iter()
            .zip(p.means())
            .map(|(w, m)| w * m.norm_squared())
            .sum::<f64>()
            .sqrt(),
    }
}

/// Error of the fitted scale: `|σ̂² - 1|` for the isotropic fit, the mean of
/// `|v̂_k - 1|` for the tied fit, and the weighted `‖Σ̂_j - I‖_F / √d` for the
/// free fit.
pub fn scale_error(params: &FitParams) -> f64 {
    match params {
        FitParams::Isotropic(p) => (p.sigma2() - 1.0).abs(),
        FitParams::TiedDiagonal(p) => {
            let v = p.diag_vars();
            v.iter().map(|x| (x - 1.0).abs()).sum::<f64>() / v.len() as f64
        }
        FitParams::FreeCovariance(p) => {
            let d = p.dim();
            let id = nalgebra::DMatrix::<f64>::identity(d, d);
            p.weights()
                .iter()
                .zip(p.covariances())
                .map(|(w, c)| w * (c - &id).norm())
                .sum::<f64>()
                / (d as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceMode {
    /// `θ ↦ L(θ, 1)`.
    LocationOnly,
    /// `θ ↦ L(θ, 1 - θ²)`.
    LocationScaleCoupled,
}

impl std::str::FromStr for SurfaceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "location_only" => Ok(SurfaceMode::LocationOnly),
            "location_scale_coupled" | "coupled" => Ok(SurfaceMode::LocationScaleCoupled),
            other => Err(Error::arg(format!("unknown surface mode `{other}`"))),
        }
    }
}

impl SurfaceMode {
    pub fn name(&self) -> &'static str {
        match self {
            SurfaceMode::LocationOnly => "location_only",
            SurfaceMode::LocationScaleCoupled => "location_scale_coupled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub theta: f64,
    /// `L(0, 1) - L(θ, σ²(θ))`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceScan {
    pub mode: SurfaceMode,
    pub rows: Vec<SurfaceRow>,
    /// Fit over the rows with a positive gap; `None` with fewer than three.
    pub fit: Option<RateFit>,
}

/// Gap `L(0, 1) - L(θ, σ²)` of the population log-likelihood of the
/// univariate symmetric mixture under `N(0, 1)` data.
///
/// With `a = θ/σ²` the gap is `½ ln σ² + (1 + θ²)/(2σ²) - ½ - E[ln cosh(aV)]`.
pub fn likelihood_gap(theta: f64, sigma2: f64, quad: &QuadratureSpec) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::domain("σ² must be positive"));
    }
    let a = theta / sigma2;
    let e = quad.expect(|v| ln_cosh(a * v))?;
    // ½ ln σ² + (1 + θ² - σ²)/(2σ²), arranged for σ² near 1
    let dv = sigma2 - 1.0;
    let head = 0.5 * dv.ln_1p() + (theta * theta - dv) / (2.0 * sigma2);
    Ok(head - e.value)
}

pub fn likelihood_surface_scan(
    mode: SurfaceMode,
    theta_grid: &[f64],
    quad: &QuadratureSpec,
) -> Result<SurfaceScan> {
    if theta_grid.iter().any(|t| !(*t >= 0.0 && *t <= 0.5)) {
        return Err(Error::arg("surface grid must lie in [0, 0.5]"));
    }
    let rows: Vec<SurfaceRow> = theta_grid
        .par_iter()
        .map(|&theta| {
            let sigma2 = match mode {
                SurfaceMode::LocationOnly => 1.0,
                SurfaceMode::LocationScaleCoupled => 1.0 - theta * theta,
            };
            Ok(SurfaceRow {
                theta,
                gap: likelihood_gap(theta, sigma2, quad)?,
            })
        })
        .collect::<Result<_>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.theta > 0.0 && r.gap > 0.0)
        .map(|r| (r.theta, r.gap))
        .unzip();
    let fit = if xs.len() >= 3 {
        Some(rate_fit(&xs, &ys)?)
    } else {
        None
    };
    Ok(SurfaceScan { mode, rows, fit })
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}
