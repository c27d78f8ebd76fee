//! Population-level EM operators.
//!
//! Both operators map `θ` to `E[Y tanh(Yᵀθ / s)]` with `Y ~ N(0, I_d)`:
//! the pseudo-population operator keeps the empirical `s = Z_{n,d} - ‖θ‖²/d`,
//! the corrected operator uses `s = 1 - ‖θ‖²`. Rotating `θ` onto the first
//! axis reduces either one to the scalar `ρ(‖θ‖) = E[V tanh(‖θ‖V / s)]`
//! along `θ/‖θ‖`, which is integrated by Gauss–Hermite quadrature.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::tanh_map;
use crate::model::{sample_standard_normal, DataSet};
use crate::quadrature::{Estimate, QuadratureSpec};
use crate::rng::RngSpec;
use crate::stats::{adaptive_simpson, SimpsonSpec};
use crate::theory::tanh_tail;

/// Above this `‖θ‖/s` the radial map is integrated on the half line.
const STEEP_SLOPE: f64 = 1.5;

/// Fraction of the admissible region used by scans: `‖θ‖²` may use at most
/// this share of the denominator's constant term.
pub const DOMAIN_GUARD: f64 = 0.9;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Pseudo,
    Corrected,
}

impl OperatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::Pseudo => "pseudo",
            OperatorKind::Corrected => "corrected",
        }
    }
}

impl std::str::FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pseudo" => Ok(OperatorKind::Pseudo),
            "corrected" => Ok(OperatorKind::Corrected),
            other => Err(Error::arg(format!("unknown operator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    Quadrature,
    MonteCarlo,
}

/// An operator value with the method used and an estimate of its numerical
/// error (node-doubling discrepancy or Monte-Carlo standard error).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorEval {
    pub value: Vec<f64>,
    pub method: EvalMethod,
    pub num_error: f64,
}

impl OperatorEval {
    pub fn norm(&self) -> f64 {
        norm(&self.value)
    }
}

/// A population operator in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PopulationOperator {
    /// `M̃_{n,d}` for a data set summarised by `z_nd`.
    Pseudo { z_nd: f64, d: usize },
    /// `M̄_d`.
    Corrected { d: usize },
}

impl PopulationOperator {
    pub fn pseudo(z_nd: f64, d: usize) -> Result<Self> {
        if !(z_nd > 0.0) || d == 0 {
            return Err(Error::arg("pseudo operator needs z_nd > 0 and d >= 1"));
        }
        Ok(PopulationOperator::Pseudo { z_nd, d })
    }

    pub fn corrected(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::arg("operator dimension must be >= 1"));
        }
        Ok(PopulationOperator::Corrected { d })
    }

    pub fn of_kind(kind: OperatorKind, z_nd: f64, d: usize) -> Result<Self> {
        match kind {
            OperatorKind::Pseudo => Self::pseudo(z_nd, d),
            OperatorKind::Corrected => Self::corrected(d),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            PopulationOperator::Pseudo { d, .. } | PopulationOperator::Corrected { d } => d,
        }
    }

    /// The tanh denominator at `‖θ‖ = r`.
    pub fn scale(&self, r: f64) -> Result<f64> {
        let s = match *self {
            PopulationOperator::Pseudo { z_nd, d } => z_nd - r * r / d as f64,
            PopulationOperator::Corrected { .. } => 1.0 - r * r,
        };
        if !(s > 0.0) {
            return Err(Error::domain(format!(
                "denominator {s} is not positive at ‖θ‖ = {r}"
            )));
        }
        Ok(s)
    }

    /// Largest `‖θ‖` admitted by [`DOMAIN_GUARD`].
    pub fn guarded_radius(&self) -> f64 {
        match *self {
            PopulationOperator::Pseudo { z_nd, d } => (DOMAIN_GUARD * z_nd * d as f64).sqrt(),
            PopulationOperator::Corrected { .. } => DOMAIN_GUARD.sqrt(),
        }
    }

    /// `ρ(r) = E[V tanh(rV / s(r))]`, the operator norm at `‖θ‖ = r ≥ 0`.
    pub fn radial(&self, r: f64, quad: &QuadratureSpec) -> Result<Estimate> {
        if r == 0.0 {
            return Ok(Estimate {
                value: 0.0,
                error: 0.0,
            });
        }
        let a = r / self.scale(r)?;
        if a <= STEEP_SLOPE {
            return quad.expect(|v| v * (a * v).tanh());
        }
        // tanh(aV) is nearly a step: polynomial rules resolve the kink at 0
        // badly, so integrate the smooth half-line form instead
        let f = |v: f64| v * (a * v).tanh() * (-0.5 * v * v).exp();
        let spec = SimpsonSpec {
            tol: quad.tol * 1e-2,
            ..SimpsonSpec::default()
        };
        let half = adaptive_simpson(f, 0.0, 40.0, &spec)?;
        Ok(Estimate {
            value: 2.0 * half / (2.0 * std::f64::consts::PI).sqrt(),
            error: spec.tol,
        })
    }

    /// The operator applied to `θ`.
    pub fn eval(&self, theta: &[f64], quad: &QuadratureSpec) -> Result<OperatorEval> {
        if theta.len() != self.dim() {
            return Err(Error::arg(format!(
                "θ has dimension {}, operator has {}",
                theta.len(),
                self.dim()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::arg("θ must be finite"));
        }
        let r = norm(theta);
        let rho = self.radial(r, quad)?;
        let value = if r == 0.0 {
            vec![0.0; theta.len()]
        } else {
            theta.iter().map(|t| rho.value * t / r).collect()
        };
        Ok(OperatorEval {
            value,
            method: EvalMethod::Quadrature,
            num_error: rho.error,
        })
    }

    /// `‖M(θ)‖/‖θ‖ - 1` at `‖θ‖ = r > 0`, without cancellation.
    ///
    /// The Taylor terms of `tanh` through fifth order are integrated in
    /// closed form (`E[V²] = 1`, `E[V⁴] = 3`, `E[V⁶] = 15`); only the
    /// remainder goes through quadrature. This resolves deficits of order
    /// `r⁶` far below the rounding level of the ratio itself.
    pub fn contraction_deficit(&self, r: f64, quad: &QuadratureSpec) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::arg("contraction needs ‖θ‖ > 0"));
        }
        let s = self.scale(r)?;
        let a = r / s;
        let closed = match *self {
            PopulationOperator::Corrected { .. } => {
                // (1-s)/s - a³/r + 2a⁵/r with s = 1 - r² collapses to
                // r⁶ q⁵ (5 - 4r² + r⁴), q = 1/(1-r²)
                let e = r * r;
                let q = 1.0 / s;
                e * e * e * q.powi(5) * (5.0 - 4.0 * e + e * e)
            }
            PopulationOperator::Pseudo { z_nd, d } => {
                let one_minus_s = (1.0 - z_nd) + r * r / d as f64;
                one_minus_s / s - r * r / s.powi(3) + 2.0 * r.powi(4) / s.powi(5)
            }
        };
        let remainder = quad.expect(|v| v * tanh_tail(a * v, 7))?;
        Ok(closed + remainder.value / r)
    }

    /// `‖M(θ)‖/‖θ‖` at `‖θ‖ = r > 0`.
    pub fn contraction_ratio_at(&self, r: f64, quad: &QuadratureSpec) -> Result<f64> {
        Ok(1.0 + self.contraction_deficit(r, quad)?)
    }
}

/// `M̃_{n,d}(θ)` by one-dimensional quadrature.
pub fn pseudo_pop_operator(
    theta: &[f64],
    z_nd: f64,
    d: usize,
    quad: &QuadratureSpec,
) -> Result<OperatorEval> {
    PopulationOperator::pseudo(z_nd, d)?.eval(theta, quad)
}

/// `M̄_d(θ)` by one-dimensional quadrature; requires `‖θ‖ < 1`.
pub fn corrected_pop_operator(
    theta: &[f64],
    d: usize,
    quad: &QuadratureSpec,
) -> Result<OperatorEval> {
    PopulationOperator::corrected(d)?.eval(theta, quad)
}

/// `‖M(θ)‖/‖θ‖`.
pub fn contraction_ratio(
    op: &PopulationOperator,
    theta: &[f64],
    quad: &QuadratureSpec,
) -> Result<f64> {
    if theta.len() != op.dim() {
        return Err(Error::arg("θ and operator dimensions differ"));
    }
    op.contraction_ratio_at(norm(theta), quad)
}

/// Contraction interval for `d ≥ 2`: `[1 - 3r²/4, 1 - (1 - 1/d) r²/4]`.
pub fn multivariate_contraction_bounds(r: f64, d: usize) -> (f64, f64) {
    let r2 = r * r;
    (1.0 - 0.75 * r2, 1.0 - (1.0 - 1.0 / d as f64) * r2 / 4.0)
}

/// Contraction interval of the univariate pseudo-population operator:
/// `[1 - 3θ⁶/2, 1 - θ⁶/5]`.
pub fn univariate_contraction_bounds(theta: f64) -> (f64, f64) {
    let t6 = theta.powi(6);
    (1.0 - 1.5 * t6, 1.0 - t6 / 5.0)
}

/// Contraction interval of the univariate corrected operator:
/// `[1 - θ⁶/2, 1 - θ⁶/5]`, valid for `|θ| ≤ 3/20`.
pub fn corrected_contraction_bounds(theta: f64) -> (f64, f64) {
    let t6 = theta.powi(6);
    (1.0 - 0.5 * t6, 1.0 - t6 / 5.0)
}

/// The sample EM operator `M_{n,d}(θ)`.
pub fn sample_operator(data: &DataSet, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != data.d() {
        return Err(Error::arg("θ and data dimensions differ"));
    }
    let r2: f64 = theta.iter().map(|t| t * t).sum();
    let s = data.z_nd() - r2 / data.d() as f64;
    if !(s > 0.0) {
        return Err(Error::domain(format!(
            "‖θ‖²/d = {} is not below Z_n,d = {}",
            r2 / data.d() as f64,
            data.z_nd()
        )));
    }
    let a: Vec<f64> = theta.iter().map(|t| t / s).collect();
    Ok(tanh_map(data, &a))
}

/// Monte-Carlo estimate of `op(θ)` from `draws` fresh `N(0, I_d)` vectors.
///
/// `num_error` is the standard error of the component along `θ/‖θ‖`.
pub fn monte_carlo_operator(
    op: &PopulationOperator,
    theta: &[f64],
    draws: usize,
    rng: &RngSpec,
) -> Result<OperatorEval> {
    let d = op.dim();
    if theta.len() != d || draws < 2 {
        return Err(Error::arg(
            "Monte-Carlo operator needs matching θ and >= 2 draws",
        ));
    }
    let r = norm(theta);
    let s = op.scale(r)?;
    let dir: Vec<f64> = if r > 0.0 {
        theta.iter().map(|t| t / r).collect()
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    let mut gen = rng.rng();
    let mut sum = vec![0.0; d];
    let (mut mean_proj, mut m2_proj) = (0.0, 0.0);
    let mut y = vec![0.0; d];
    for i in 0..draws {
        for v in y.iter_mut() {
            *v = gen.sample(StandardNormal);
        }
        let u: f64 = y.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() / s;
        let t = u.tanh();
        for (acc, &yk) in sum.iter_mut().zip(&y) {
            *acc += yk * t;
        }
        let proj = t * y.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
        // Welford
        let delta = proj - mean_proj;
        mean_proj += delta / (i + 1) as f64;
        m2_proj += delta * (proj - mean_proj);
    }
    let nf = draws as f64;
    Ok(OperatorEval {
        value: sum.iter().map(|v| v / nf).collect(),
        method: EvalMethod::MonteCarlo,
        num_error: (m2_proj / (nf - 1.0) / nf).sqrt(),
    })
}

/// The scalar recursion `θ_{t+1} = θ_t / (1 + c θ_t^k)`, returned with `θ_0`.
pub fn surrogate_sequence(c: f64, k: i32, theta0: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut t = theta0;
    out.push(t);
    for _ in 0..steps {
        t /= 1.0 + c * t.powi(k);
        out.push(t);
    }
    out
}

/// One row of a perturbation scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub r: f64,
    pub mean_sup_dev: f64,
    pub stderr: f64,
    /// Trials that contributed to this radius.
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationTable {
    pub operator: OperatorKind,
    pub n: usize,
    pub d: usize,
    pub rows: Vec<PerturbationRow>,
    /// (trial, radius) pairs skipped because the ball left the domain.
    pub skipped: usize,
}

/// Settings of a perturbation scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub operator: OperatorKind,
    pub radii: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub grid_points: usize,
    /// Random directions per grid radius when `d ≥ 2`.
    pub directions: usize,
    pub rng: RngSpec,
    pub quad: QuadratureSpec,
}

impl PerturbationSpec {
    pub fn new(
        operator: OperatorKind,
        radii: Vec<f64>,
        n: usize,
        d: usize,
        trials: usize,
        rng: RngSpec,
    ) -> Self {
        Self {
            operator,
            radii,
            n,
            d,
            trials,
            grid_points: 64,
            directions: 8,
            rng,
            quad: QuadratureSpec::default(),
        }
    }
}

/// Estimates `sup_{θ ∈ B(0,r)} ‖M_{n,d}(θ) - M(θ)‖` for each radius by a grid
/// over the ball, averaged over independent data sets.
///
/// For `d = 1` the grid is `grid_points` log-spaced values in `[r/100, r]`
/// (both operators are odd, so negative values add nothing); for `d ≥ 2` it
/// is `grid_points` radii times `directions` random unit vectors. A radius
/// whose ball leaves the guarded domain of either operator is skipped for
/// that trial and counted.
pub fn perturbation_scan(spec: &PerturbationSpec) -> Result<PerturbationTable> {
    if spec.radii.is_empty() || spec.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::arg("radii must be positive"));
    }
    if spec.grid_points < 8 {
        return Err(Error::arg("perturbation scan needs at least 8 grid points"));
    }
    if spec.trials == 0 || spec.n == 0 || spec.d == 0 || spec.directions == 0 {
        return Err(Error::arg("trials, n, d and directions must be positive"));
    }
    spec.quad.validate()?;

    let per_trial: Vec<Vec<Option<f64>>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| trial_sup_deviations(spec, trial))
        .collect::<Result<_>>()?;

    let mut skipped = 0;
    let rows = spec
        .radii
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let vals: Vec<f64> = per_trial.iter().filter_map(|t| t[j]).collect();
            skipped += spec.trials - vals.len();
            let (mean, stderr) = mean_stderr(&vals);
            PerturbationRow {
                r,
                mean_sup_dev: mean,
                stderr,
                trials: vals.len(),
            }
        })
        .collect();
    Ok(PerturbationTable {
        operator: spec.operator,
        n: spec.n,
        d: spec.d,
        rows,
        skipped,
    })
}

fn trial_sup_deviations(spec: &PerturbationSpec, trial: usize) -> Result<Vec<Option<f64>>> {
    let trial_rng = spec.rng.child(trial as u64);
    let data = sample_standard_normal(spec.n, spec.d, &trial_rng.child(0))?;
    let op = PopulationOperator::of_kind(spec.operator, data.z_nd(), spec.d)?;
    let sample_guard = PopulationOperator::pseudo(data.z_nd(), spec.d)?.guarded_radius();
    let limit = sample_guard.min(op.guarded_radius());
    let mut dir_rng = trial_rng.child(1).rng();
    spec.radii
        .iter()
        .map(|&r| {
            if r > limit {
                return Ok(None);
            }
            let mut sup: f64 = 0.0;
            for g in 0..spec.grid_points {
                let frac = g as f64 / (spec.grid_points - 1) as f64;
                let rad = r * 10f64.powf(-2.0 * (1.0 - frac));
                let dirs = if spec.d == 1 { 1 } else { spec.directions };
                for _ in 0..dirs {
                    let theta: Vec<f64> = if spec.d == 1 {
                        vec![rad]
                    } else {
                        let v: Vec<f64> = (0..spec.d)
                            .map(|_| dir_rng.sample(StandardNormal))
                            .collect();
                        let nv = norm(&v);
                        v.iter().map(|x| x * rad / nv).collect()
                    };
                    let sample = sample_operator(&data, &theta)?;
                    let pop = op.eval(&theta, &spec.quad)?;
                    let dev = sample
                        .iter()
                        .zip(&pop.value)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    sup = sup.max(dev);
                }
            }
            Ok(Some(sup))
        })
        .collect()
}

/// Mean and standard error of the mean; the error is zero for fewer than two
/// values.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_maps_to_zero() {
        let q = QuadratureSpec::default();
        let p = pseudo_pop_operator(&[0.0, 0.0], 1.0, 2, &q).unwrap();
        assert_eq!(p.value, vec![0.0, 0.0]);
        let c = corrected_pop_operator(&[0.0], 1, &q).unwrap();
        assert_eq!(c.value, vec![0.0]);
    }

    #[test]
    fn corrected_domain() {
        let q = QuadratureSpec::default();
        assert!(matches!(
            corrected_pop_operator(&[1.0], 1, &q),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            pseudo_pop_operator(&[1.5, 0.0], 1.0, 2, &q),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn output_is_parallel_and_odd() {
        let q = QuadratureSpec::default();
        let theta = [0.05, -0.08, 0.02];
        let m = pseudo_pop_operator(&theta, 1.01, 3, &q).unwrap();
        let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
        let mneg = pseudo_pop_operator(&neg, 1.01, 3, &q).unwrap();
        let cos =
            m.value.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() / (m.norm() * norm(&theta));
        assert!(cos >= 1.0 - 1e-10);
        for (a, b) in m.value.iter().zip(&mneg.value) {
            assert_abs_diff_eq!(*a, -b, epsilon = 1e-16);
        }
    }

    #[test]
    fn remainder_leading_term() {
        let u = 1e-3f64;
        assert!((tanh_tail(u, 7) / u.powi(7) + 17.0 / 315.0).abs() < 1e-6);
        assert_abs_diff_eq!(tanh_tail(-0.4, 7), -tanh_tail(0.4, 7), epsilon = 1e-20);
    }

    #[test]
    fn deficit_agrees_with_plain_ratio() {
        let q = QuadratureSpec::default();
        for op in [
            PopulationOperator::corrected(1).unwrap(),
            PopulationOperator::pseudo(1.003, 2).unwrap(),
        ] {
            for r in [0.1, 0.3, 0.6] {
                let plain = op.radial(r, &q).unwrap().value / r;
                let ratio = op.contraction_ratio_at(r, &q).unwrap();
                assert!((plain - ratio).abs() < 1e-14, "r={r}: {plain} vs {ratio}");
            }
        }
    }

    #[test]
    fn univariate_ratio_at_unit_z() {
        // z = 1 makes the pseudo operator equal to the corrected one
        let q = QuadratureSpec::default();
        let op = PopulationOperator::pseudo(1.0, 1).unwrap();
        let ratio = contraction_ratio(&op, &[0.1], &q).unwrap();
        assert!((0.999_998_5..=0.999_999_8).contains(&ratio), "{ratio}");
        assert_eq!(ratio, contraction_ratio(&op, &[-0.1], &q).unwrap());
    }

    #[test]
    fn corrected_matches_series() {
        // M̄₁(θ)/θ = 1 - 2θ⁶/3 + 2θ⁸ + O(θ¹⁰), from integrating the Taylor
        // expansion of x tanh(xθ/(1-θ²)) term by term
        let q = QuadratureSpec::default();
        let op = PopulationOperator::corrected(1).unwrap();
        for t in [0.01f64, 0.03] {
            let def = op.contraction_deficit(t, &q).unwrap();
            let series = -2.0 / 3.0 * t.powi(6) + 2.0 * t.powi(8);
            assert!(
                (def - series).abs() < 1e-3 * t.powi(6),
                "θ={t}: {def} vs {series}"
            );
        }
        let def = op.contraction_deficit(0.1, &q).unwrap();
        assert!((def + 6.475_032_989_444_266e-7).abs() < 1e-19, "{def}");
        let m = corrected_pop_operator(&[0.1], 1, &q).unwrap().value[0];
        assert!(
            (m / 0.1 - (1.0 - 6.475_032_989_444e-7)).abs() < 1e-14,
            "{m}"
        );
    }

    #[test]
    fn bivariate_ratio_interval() {
        let q = QuadratureSpec::default();
        let op = PopulationOperator::pseudo(1.0, 2).unwrap();
        let ratio = contraction_ratio(&op, &[0.1, 0.0], &q).unwrap();
        assert!((0.9925..=0.99875).contains(&ratio), "{ratio}");
        let (lo, hi) = multivariate_contraction_bounds(0.1, 2);
        assert_abs_diff_eq!(lo, 0.9925, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 0.99875, epsilon = 1e-15);
    }

    #[test]
    fn surrogate_recursion() {
        assert!(surrogate_sequence(1.0, 6, 0.0, 5).iter().all(|&t| t == 0.0));
        let s = surrogate_sequence(1.0, 6, 0.5, 1);
        assert_eq!(s[1], 0.5 / 1.015625);
        let long = surrogate_sequence(0.5, 2, 0.3, 100);
        assert_eq!(long.len(), 101);
        assert!(long.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn scan_argument_checks() {
        let base = PerturbationSpec::new(
            OperatorKind::Pseudo,
            vec![0.1],
            50,
            1,
            2,
            RngSpec::new(1, 1),
        );
        let mut s = base.clone();
        s.grid_points = 4;
        assert!(perturbation_scan(&s).is_err());
        let mut s = base.clone();
        s.radii = vec![0.0];
        assert!(perturbation_scan(&s).is_err());
        assert!(perturbation_scan(&base).is_ok());
    }

    #[test]
    fn scan_skips_radii_outside_domain() {
        let spec = PerturbationSpec::new(
            OperatorKind::Corrected,
            vec![0.1, 0.99],
            200,
            1,
            3,
            RngSpec::new(2, 2),
        );
        let table = perturbation_scan(&spec).unwrap();
        assert_eq!(table.rows[0].trials, 3);
        assert_eq!(table.rows[1].trials, 0);
        assert_eq!(table.skipped, 3);
    }

    #[test]
    fn mean_stderr_basics() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(m, 2.0);
        assert_abs_diff_eq!(s, (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(mean_stderr(&[4.0]), (4.0, 0.0));
    }
}
