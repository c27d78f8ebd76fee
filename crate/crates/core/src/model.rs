//! Mixture families, densities, data generation and likelihood objectives.
//!
//! The data-generating distribution is always `N(0, I_d)`. Three two-component
//! fits are supported: the symmetric isotropic location-scale mixture
//! `½ N(-θ, σ²I) + ½ N(θ, σ²I)`, the symmetric mixture with a tied diagonal
//! covariance, and the unconstrained two-component mixture.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;
use crate::rng::RngSpec;

/// Lower bound on every variance parameter.
pub const SIGMA2_FLOOR: f64 = 1e-8;
/// Upper bound on variance parameters of the compact parameter set.
pub const SIGMA2_MAX: f64 = 100.0;
/// Coordinate-wise bound on location parameters of the compact parameter set.
pub const THETA_MAX: f64 = 10.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// `ln cosh(u)` without overflow.
#[inline]
pub fn ln_cosh(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        // cosh u - 1 = 2 sinh²(u/2) keeps small arguments accurate
        let h = (0.5 * a).sinh();
        (2.0 * h * h).ln_1p()
    } else {
        a + (-2.0 * a).exp().ln_1p() - LN_2
    }
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

fn check_location(theta: &[f64]) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::arg("location vector must have dimension >= 1"));
    }
    if let Some(t) = theta.iter().find(|t| !t.is_finite() || t.abs() > THETA_MAX) {
        return Err(Error::arg(format!(
            "location coordinate {t} outside [-{THETA_MAX}, {THETA_MAX}]"
        )));
    }
    Ok(())
}

fn check_variance(v: f64, what: &str) -> Result<()> {
    if !(SIGMA2_FLOOR..=SIGMA2_MAX).contains(&v) {
        return Err(Error::arg(format!(
            "{what} {v} outside [{SIGMA2_FLOOR:e}, {SIGMA2_MAX}]"
        )));
    }
    Ok(())
}

fn check_point(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::arg(format!(
            "point has dimension {}, expected {d}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("point has non-finite coordinates"));
    }
    Ok(())
}

/// Symmetric isotropic fit: `½ N(-θ, σ²I) + ½ N(θ, σ²I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoParams {
    theta: Vec<f64>,
    sigma2: f64,
}

impl IsoParams {
    pub fn new(theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        check_location(&theta)?;
        check_variance(sigma2, "sigma2")?;
        Ok(Self { theta, sigma2 })
    }

    /// The true parameter `(0, 1)` in dimension `d`.
    pub fn truth(d: usize) -> Self {
        Self {
            theta: vec![0.0; d],
            sigma2: 1.0,
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta_norm(&self) -> f64 {
        sq_norm(&self.theta).sqrt()
    }

    /// Component responsibility of `+θ` for the point `x`.
    pub fn weight(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim())?;
        Ok(sigmoid(2.0 * dot(x, &self.theta) / self.sigma2))
    }
}

/// Symmetric fit with a shared diagonal covariance `diag(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiedDiagParams {
    theta: Vec<f64>,
    diag_vars: Vec<f64>,
}

impl TiedDiagParams {
    pub fn new(theta: Vec<f64>, diag_vars: Vec<f64>) -> Result<Self> {
        check_location(&theta)?;
        if diag_vars.len() != theta.len() {
            return Err(Error::arg("diag_vars and theta lengths differ"));
        }
        for &v in &diag_vars {
            check_variance(v, "diagonal variance")?;
        }
        Ok(Self { theta, diag_vars })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn diag_vars(&self) -> &[f64] {
        &self.diag_vars
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta_norm(&self) -> f64 {
        sq_norm(&self.theta).sqrt()
    }

    /// `Σ⁻¹θ`, the vector inside the responsibility sigmoid.
    pub fn natural_location(&self) -> Vec<f64> {
        self.theta
            .iter()
            .zip(&self.diag_vars)
            .map(|(t, v)| t / v)
            .collect()
    }

    pub fn weight(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim())?;
        Ok(sigmoid(2.0 * dot(x, &self.natural_location())))
    }
}

/// Unconstrained two-component Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeCovParams {
    weights: [f64; 2],
    means: [DVector<f64>; 2],
    covariances: [DMatrix<f64>; 2],
}

impl FreeCovParams {
    pub fn new(
        weights: [f64; 2],
        means: [DVector<f64>; 2],
        covariances: [DMatrix<f64>; 2],
    ) -> Result<Self> {
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::arg("mixing weights must lie in [0, 1]"));
        }
        if (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
            return Err(Error::arg("mixing weights must sum to 1"));
        }
        let d = means[0].len();
        if d == 0 || means[1].len() != d {
            return Err(Error::arg(
                "component means must share a positive dimension",
            ));
        }
        for m in &means {
            check_location(m.as_slice())?;
        }
        for c in &covariances {
            if c.nrows() != d || c.ncols() != d {
                return Err(Error::arg("covariance shape does not match the means"));
            }
            if (c - c.transpose()).amax() > 1e-10 * c.amax().max(1.0) {
                return Err(Error::arg("covariance is not symmetric"));
            }
            let eig = SymmetricEigen::new(c.clone());
            let min = eig.eigenvalues.min();
            if !(min >= SIGMA2_FLOOR * (1.0 - 1e-9)) {
                return Err(Error::arg(format!(
                    "covariance eigenvalue {min:e} below the floor {SIGMA2_FLOOR:e}"
                )));
            }
        }
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    /// Both components equal to `N(0, I_d)`.
    pub fn standard(d: usize) -> Self {
        Self {
            weights: [0.5, 0.5],
            means: [DVector::zeros(d), DVector::zeros(d)],
            covariances: [DMatrix::identity(d, d), DMatrix::identity(d, d)],
        }
    }

    pub fn weights(&self) -> [f64; 2] {
        self.weights
    }

    pub fn means(&self) -> &[DVector<f64>; 2] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>; 2] {
        &self.covariances
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub(crate) fn components(&self) -> Result<[GaussianComponent; 2]> {
        Ok([
            GaussianComponent::new(&self.means[0], &self.covariances[0])?,
            GaussianComponent::new(&self.means[1], &self.covariances[1])?,
        ])
    }
}

/// A Gaussian factored for repeated density evaluation.
pub(crate) struct GaussianComponent {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl GaussianComponent {
    pub(crate) fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::numerical("covariance is not positive definite"))?;
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let d = mean.len() as f64;
        Ok(Self {
            mean: mean.clone(),
            chol,
            log_norm: -d * HALF_LN_2PI - 0.5 * log_det,
        })
    }

    pub(crate) fn log_pdf(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let y = self
            .chol
            .l()
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * y.norm_squared()
    }
}

/// Two-point log-sum-exp.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Densities of a two-component fit.
pub trait Mixture {
    fn dim(&self) -> usize;

    /// Log of the mixture density at `x`.
    fn log_density(&self, x: &[f64]) -> Result<f64>;

    /// The sample objective `L_n = (1/n) Σ log f(X_i)`.
    fn log_likelihood(&self, data: &DataSet) -> Result<f64> {
        check_dims(self.dim(), data)?;
        let mut total = 0.0;
        for row in data.rows() {
            total += self.log_density(row)?;
        }
        Ok(total / data.n() as f64)
    }
}

fn check_dims(d: usize, data: &DataSet) -> Result<()> {
    if data.d() != d {
        return Err(Error::arg(format!(
            "parameters have dimension {d}, data has {}",
            data.d()
        )));
    }
    Ok(())
}

impl Mixture for IsoParams {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim())?;
        let s2 = self.sigma2;
        let d = self.dim() as f64;
        Ok(
            -d * (HALF_LN_2PI + 0.5 * s2.ln()) - (sq_norm(x) + sq_norm(&self.theta)) / (2.0 * s2)
                + ln_cosh(dot(x, &self.theta) / s2),
        )
    }

    fn log_likelihood(&self, data: &DataSet) -> Result<f64> {
        check_dims(self.dim(), data)?;
        let s2 = self.sigma2;
        let d = self.dim() as f64;
        let mean_lc = data
            .rows()
            .map(|row| ln_cosh(dot(row, &self.theta) / s2))
            .sum::<f64>()
            / data.n() as f64;
        Ok(-d * (HALF_LN_2PI + 0.5 * s2.ln())
            - (d * data.z_nd() + sq_norm(&self.theta)) / (2.0 * s2)
            + mean_lc)
    }
}

impl Mixture for TiedDiagParams {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim())?;
        let mut out = 0.0;
        let mut u = 0.0;
        for ((&xk, &tk), &vk) in x.iter().zip(&self.theta).zip(&self.diag_vars) {
            out -= HALF_LN_2PI + 0.5 * vk.ln() + (xk * xk + tk * tk) / (2.0 * vk);
            u += xk * tk / vk;
        }
        Ok(out + ln_cosh(u))
    }
}

impl Mixture for FreeCovParams {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_point(x, self.dim())?;
        let comps = self.components()?;
        Ok(self.log_density_with(&comps, x))
    }

    fn log_likelihood(&self, data: &DataSet) -> Result<f64> {
        check_dims(self.dim(), data)?;
        let comps = self.components()?;
        let total: f64 = data
            .rows()
            .map(|row| self.log_density_with(&comps, row))
            .sum();
        Ok(total / data.n() as f64)
    }
}

impl FreeCovParams {
    fn log_density_with(&self, comps: &[GaussianComponent; 2], x: &[f64]) -> f64 {
        let a = self.weights[0].ln() + comps[0].log_pdf(x);
        let b = self.weights[1].ln() + comps[1].log_pdf(x);
        log_add_exp(a, b)
    }
}

/// Log of the mixture density at `x`.
pub fn mixture_log_density<M: Mixture + ?Sized>(params: &M, x: &[f64]) -> Result<f64> {
    params.log_density(x)
}

/// The sample log-likelihood `L_n(params)`.
pub fn sample_log_likelihood<M: Mixture + ?Sized>(params: &M, data: &DataSet) -> Result<f64> {
    params.log_likelihood(data)
}

/// Which mixture parameterization is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    #[default]
    Isotropic,
    TiedDiagonal,
    FreeCovariance,
}

impl FitFamily {
    pub fn name(&self) -> &'static str {
        match self {
            FitFamily::Isotropic => "isotropic",
            FitFamily::TiedDiagonal => "tied_diagonal",
            FitFamily::FreeCovariance => "free_covariance",
        }
    }
}

impl fmt::Display for FitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isotropic" | "iso" => Ok(FitFamily::Isotropic),
            "tied_diagonal" | "tied-diagonal" | "tied" => Ok(FitFamily::TiedDiagonal),
            "free_covariance" | "free-covariance" | "free" => Ok(FitFamily::FreeCovariance),
            other => Err(Error::arg(format!("unknown fit family `{other}`"))),
        }
    }
}

/// Parameters of any of the three fits.
#[derive(Debug, Clone, PartialEq)]
pub enum FitParams {
    Isotropic(IsoParams),
    TiedDiagonal(TiedDiagParams),
    FreeCovariance(FreeCovParams),
}

impl FitParams {
    pub fn family(&self) -> FitFamily {
        match self {
            FitParams::Isotropic(_) => FitFamily::Isotropic,
            FitParams::TiedDiagonal(_) => FitFamily::TiedDiagonal,
            FitParams::FreeCovariance(_) => FitFamily::FreeCovariance,
        }
    }

    pub fn as_mixture(&self) -> &dyn Mixture {
        match self {
            FitParams::Isotropic(p) => p,
            FitParams::TiedDiagonal(p) => p,
            FitParams::FreeCovariance(p) => p,
        }
    }

    /// Location coordinates used for step sizes: `θ` for the symmetric fits,
    /// both stacked means for the free fit.
    pub fn location(&self) -> Vec<f64> {
        match self {
            FitParams::Isotropic(p) => p.theta.clone(),
            FitParams::TiedDiagonal(p) => p.theta.clone(),
            FitParams::FreeCovariance(p) => {
                p.means.iter().flat_map(|m| m.iter().copied()).collect()
            }
        }
    }
}

impl Mixture for FitParams {
    fn dim(&self) -> usize {
        self.as_mixture().dim()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.as_mixture().log_density(x)
    }

    fn log_likelihood(&self, data: &DataSet) -> Result<f64> {
        self.as_mixture().log_likelihood(data)
    }
}

/// An `n × d` sample with cached squared norms and `Z_{n,d} = Σ‖X_i‖²/(nd)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    n: usize,
    d: usize,
    samples: Vec<f64>,
    sq_norms: Vec<f64>,
    z_nd: f64,
}

impl DataSet {
    /// Builds a data set from row-major samples.
    pub fn from_rows(n: usize, d: usize, samples: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::arg(format!(
                "need n >= 1 and d >= 1, got n={n}, d={d}"
            )));
        }
        if samples.len() != n * d {
            return Err(Error::arg(format!(
                "expected {} values for an {n}x{d} sample, got {}",
                n * d,
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("samples must be finite"));
        }
        let sq_norms: Vec<f64> = samples.chunks_exact(d).map(sq_norm).collect();
        let z_nd = sq_norms.iter().sum::<f64>() / (n * d) as f64;
        Ok(Self {
            n,
            d,
            samples,
            sq_norms,
            z_nd,
        })
    }

    /// Builds a data set from a list of points.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::arg("points have inconsistent dimensions"));
        }
        Self::from_rows(points.len(), d, points.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.samples.chunks_exact(self.d)
    }

    pub fn sq_norms(&self) -> &[f64] {
        &self.sq_norms
    }

    /// `Σ‖X_i‖²/(nd)`.
    pub fn z_nd(&self) -> f64 {
        self.z_nd
    }

    /// Per-coordinate second moments `(1/n) Σ X_{ik}²`.
    pub fn coordinate_second_moments(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for row in self.rows() {
            for (acc, &x) in m.iter_mut().zip(row) {
                *acc += x * x;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// Data set with every sample negated.
    pub fn negated(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

/// `n` i.i.d. draws from `N(0, I_d)`.
pub fn sample_standard_normal(n: usize, d: usize, rng: &RngSpec) -> Result<DataSet> {
    if n == 0 || d == 0 {
        return Err(Error::arg(format!(
            "need n >= 1 and d >= 1, got n={n}, d={d}"
        )));
    }
    let mut gen = rng.rng();
    let samples: Vec<f64> = (0..n * d)
        .map(|_| StandardNormal.sample(&mut gen))
        .collect();
    DataSet::from_rows(n, d, samples)
}

/// `E_{X~N(0,1)}[log f_{θ,σ}(X)]` for the univariate isotropic fit.
pub fn population_log_likelihood_1d(theta: f64, sigma2: f64, quad: &QuadratureSpec) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::arg("theta must be finite"));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::arg("sigma2 must be positive"));
    }
    // E[V²] = 1 is applied in closed form; only the ln cosh term is integrated
    let quad_part = quad.expect(|v| ln_cosh(v * theta / sigma2))?;
    Ok(-HALF_LN_2PI - 0.5 * sigma2.ln() - (1.0 + theta * theta) / (2.0 * sigma2) + quad_part.value)
}
