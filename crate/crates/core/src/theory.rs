//! Analytic side: polynomial bounds on `x tanh x`, the odd power series of the
//! EM operator, localization recursions, epoch schedules and a few numerical
//! checks of the supporting inequalities.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_standard_normal, DataSet};
use crate::population::{mean_stderr, PopulationOperator};
use crate::quadrature::QuadratureSpec;
use crate::rng::RngSpec;
use crate::stats::{rate_fit, RateFit};

/// Odd Taylor coefficients of `tanh`: entry `k` multiplies `u^(2k+1)`.
pub fn tanh_series() -> &'static [f64] {
    static COEFFS: OnceLock<Vec<f64>> = OnceLock::new();
    COEFFS.get_or_init(|| {
        // T' = 1 - T² with T = Σ c_j u^j
        const DEG: usize = 45;
        let mut c = vec![0.0f64; DEG + 1];
        c[1] = 1.0;
        for j in 1..DEG {
            let conv: f64 = (0..=j).map(|i| c[i] * c[j - i]).sum();
            c[j + 1] = -conv / (j + 1) as f64;
        }
        c.iter().skip(1).step_by(2).copied().collect()
    })
}

/// `Σ_{j ≥ from} c_j u^j`, the tail of the tanh series from the odd power
/// `from`, without cancellation for small `u`.
pub fn tanh_tail(u: f64, from: u32) -> f64 {
    assert!(from % 2 == 1, "tanh series has odd powers only");
    let first = (from as usize - 1) / 2;
    let coeffs = tanh_series();
    if u.abs() <= 0.6 {
        let u2 = u * u;
        let mut acc = 0.0;
        for &c in coeffs[first..].iter().rev() {
            acc = acc * u2 + c;
        }
        acc * u.powi(from as i32)
    } else {
        let head: f64 = coeffs[..first]
            .iter()
            .enumerate()
            .map(|(k, c)| c * u.powi(2 * k as i32 + 1))
            .sum();
        u.tanh() - head
    }
}

/// Polynomial bounds on `x tanh x` at two orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhPolyBounds {
    /// `x² - x⁴/3`
    pub lower4: f64,
    /// `x² - x⁴/3 + 2x⁶/15`
    pub upper6: f64,
    /// `x² - x⁴/3 + 2x⁶/15 - 17x⁸/315`
    pub lower8: f64,
    /// `x² - x⁴/3 + 2x⁶/15 - 17x⁸/315 + 62x¹⁰/2835`
    pub upper10: f64,
}

impl TanhPolyBounds {
    /// The four signed margins `x tanh x - lower4`, `upper6 - x tanh x`,
    /// `x tanh x - lower8`, `upper10 - x tanh x`, each evaluated from the
    /// series tail so that tiny margins near zero keep their sign.
    pub fn margins(x: f64) -> [f64; 4] {
        [
            x * tanh_tail(x, 5),
            -x * tanh_tail(x, 7),
            x * tanh_tail(x, 9),
            -x * tanh_tail(x, 11),
        ]
    }
}

pub fn tanh_poly_bounds(x: f64) -> TanhPolyBounds {
    let x2 = x * x;
    let lower4 = x2 * (1.0 - x2 / 3.0);
    let upper6 = lower4 + 2.0 * x2.powi(3) / 15.0;
    let lower8 = upper6 - 17.0 * x2.powi(4) / 315.0;
    let upper10 = lower8 + 62.0 * x2.powi(5) / 2835.0;
    TanhPolyBounds {
        lower4,
        upper6,
        lower8,
        upper10,
    }
}

/// Coefficients `c_{j,k}`, `k = 0, 1, …`, of `θ^j x^{2k+2} / b^{(j+1)/2 + k}`
/// in the expansion of `x tanh(xθ / (b - θ²))`, as exact fractions (the
/// `θ¹` term is `x²/b`).
pub const SERIES_COEFFS: [(u32, &[(i64, i64)]); 4] = [
    (3, &[(1, 1), (-1, 3)]),
    (5, &[(1, 1), (-1, 1), (2, 15)]),
    (7, &[(1, 1), (-2, 1), (2, 3), (-17, 315)]),
    (9, &[(1, 1), (-10, 3), (2, 1), (-17, 45), (62, 2835)]),
];

/// `μ₂, μ₄, …, μ₁₀` of the standard normal.
pub fn gaussian_even_moments() -> [f64; 5] {
    [1.0, 3.0, 15.0, 105.0, 945.0]
}

/// `μ̂₂, μ̂₄, …, μ̂₁₀` of a univariate sample.
pub fn sample_even_moments(data: &DataSet) -> Result<[f64; 5]> {
    if data.d() != 1 {
        return Err(Error::arg("sample moments are defined for d = 1"));
    }
    let mut m = [0.0; 5];
    for &x in data.samples() {
        let x2 = x * x;
        let mut p = x2;
        for slot in m.iter_mut() {
            *slot += p;
            p *= x2;
        }
    }
    let n = data.n() as f64;
    Ok(m.map(|s| s / n))
}

/// `Σ_k c_{j,k} μ_{2k+2} / b^{(j+1)/2 + k}`: the population coefficient `β_j`
/// when `b = 1` and `moments` are Gaussian, or its sample analogue with
/// `b = a_n` and sample moments.
pub fn operator_series_coeffs(order: u32, denom: f64, moments: &[f64]) -> Result<f64> {
    let coeffs = SERIES_COEFFS
        .iter()
        .find(|(j, _)| *j == order)
        .map(|(_, c)| *c)
        .ok_or_else(|| Error::arg(format!("series order {order} not in {{3, 5, 7, 9}}")))?;
    if moments.len() < coeffs.len() {
        return Err(Error::arg(format!(
            "order {order} needs {} even moments",
            coeffs.len()
        )));
    }
    if !(denom > 0.0) {
        return Err(Error::arg("series denominator must be positive"));
    }
    let base = (order as i32 - 1) / 2;
    Ok(coeffs
        .iter()
        .zip(moments)
        .enumerate()
        .map(|(k, ((num, den), mu))| {
            *num as f64 / *den as f64 * mu / denom.powi(base + k as i32 + 1)
        })
        .sum())
}

/// Odd Taylor coefficients `(c₃, c₅, c₇, c₉)` of `θ ↦ M̄₁(θ)` at zero,
/// extracted numerically.
///
/// `M̄₁(θ)/θ - 1` is sampled on the stencil `θ = ±h, ±2h, ±3h, ±4h` (odd
/// symmetry folds it to four points) and the even polynomial through those
/// values is solved for. Only `E[V²] = 1` enters in closed form; the rest is
/// quadrature of `V (tanh(aV) - aV)`. The neglected `θ¹¹` term biases `c₃`,
/// `c₅`, `c₇`, `c₉` by `O(h⁸)`, `O(h⁶)`, `O(h⁴)`, `O(h²)`; one Richardson
/// step against the stencil at `h/2` removes that leading bias.
pub fn corrected_odd_coefficients(h: f64, quad: &QuadratureSpec) -> Result<[f64; 4]> {
    let coarse = odd_coefficients_on_stencil(h, quad)?;
    let fine = odd_coefficients_on_stencil(0.5 * h, quad)?;
    let mut out = [0.0; 4];
    for (j, slot) in out.iter_mut().enumerate() {
        let w = 2f64.powi(8 - 2 * j as i32);
        *slot = (w * fine[j] - coarse[j]) / (w - 1.0);
    }
    Ok(out)
}

fn odd_coefficients_on_stencil(h: f64, quad: &QuadratureSpec) -> Result<[f64; 4]> {
    if !(h > 0.0) || 4.0 * h >= 0.5 {
        return Err(Error::arg("stencil spacing must satisfy 0 < 4h < 0.5"));
    }
    let mut rows = [[0.0; 4]; 4];
    let mut rhs = [0.0; 4];
    for k in 0..4 {
        let t = (k + 1) as f64 * h;
        let s = 1.0 - t * t;
        let a = t / s;
        let cubic_and_up = quad.expect(|v| v * tanh_tail(a * v, 3))?;
        // M̄₁(θ)/θ - 1 = (a - θ)/θ + E[V (tanh(aV) - aV)]/θ
        rhs[k] = t * t / s + cubic_and_up.value / t;
        let u = t * t;
        for (j, slot) in rows[k].iter_mut().enumerate() {
            *slot = u.powi(j as i32 + 1);
        }
    }
    solve4(rows, rhs)
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Result<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return Err(Error::numerical("singular stencil system"));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for c in col..4 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// An exact rational `num/den` with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: i64,
    pub den: i64,
}

impl Ratio {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i64;
        let sign = if den < 0 { -1 } else { 1 };
        Ratio {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    pub fn mul(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.num, self.den * o.den)
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// The affine recursions `a_{ℓ+1} = slope · a_ℓ + offset` that track the
/// shrinking localization radii `n^{-a_ℓ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecursionKind {
    /// `α_{ℓ+1} = α_ℓ/3 + 1/6`, fixed point 1/4.
    MultivariateAlpha,
    /// `a_{ℓ+1} = 3a_ℓ/7 + 1/14`, fixed point 1/8.
    UnivariateA,
    /// `a_{ℓ+1} = a_ℓ/7 + 1/14`, fixed point 1/12.
    UnivariateCorollary,
}

impl RecursionKind {
    pub const ALL: [RecursionKind; 3] = [
        RecursionKind::MultivariateAlpha,
        RecursionKind::UnivariateA,
        RecursionKind::UnivariateCorollary,
    ];

    /// `(slope, offset)`.
    pub fn coefficients(&self) -> (Ratio, Ratio) {
        match self {
            RecursionKind::MultivariateAlpha => (Ratio::new(1, 3), Ratio::new(1, 6)),
            RecursionKind::UnivariateA => (Ratio::new(3, 7), Ratio::new(1, 14)),
            RecursionKind::UnivariateCorollary => (Ratio::new(1, 7), Ratio::new(1, 14)),
        }
    }

    /// `offset / (1 - slope)`.
    pub fn fixed_point(&self) -> Ratio {
        let (s, o) = self.coefficients();
        Ratio::new(o.num * s.den, o.den * (s.den - s.num))
    }

    pub fn name(&self) -> &'static str {
        match self {
            RecursionKind::MultivariateAlpha => "multivariate_alpha",
            RecursionKind::UnivariateA => "univariate_a",
            RecursionKind::UnivariateCorollary => "univariate_corollary",
        }
    }

    /// One exact step.
    pub fn step_exact(&self, a: Ratio) -> Ratio {
        let (s, o) = self.coefficients();
        s.mul(a).add(o)
    }
}

impl std::str::FromStr for RecursionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RecursionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown recursion `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionTrace {
    pub kind: RecursionKind,
    /// `a₀, a₁, …, a_steps`.
    pub values: Vec<f64>,
    pub fixed_point: f64,
}

pub fn localization_recursion(
    kind: RecursionKind,
    a0: f64,
    steps: usize,
) -> Result<RecursionTrace> {
    if steps == 0 {
        return Err(Error::arg("recursion needs at least one step"));
    }
    if !a0.is_finite() {
        return Err(Error::arg("a₀ must be finite"));
    }
    let (s, o) = kind.coefficients();
    let (s, o) = (s.to_f64(), o.to_f64());
    let mut values = Vec::with_capacity(steps + 1);
    let mut a = a0;
    values.push(a);
    for _ in 0..steps {
        a = s * a + o;
        values.push(a);
    }
    Ok(RecursionTrace {
        kind,
        values,
        fixed_point: kind.fixed_point().to_f64(),
    })
}

/// Epoch lengths of the univariate localization argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub n: usize,
    pub omega: f64,
    pub c_n_delta: f64,
    /// `a₀, …, a_{ℓ*}` of the univariate recursion from 1/16.
    pub a: Vec<f64>,
    pub t_ell: Vec<u64>,
    /// Cumulative sums of `t_ell`.
    pub big_t: Vec<u64>,
    pub ell_star: usize,
    /// `true` when `ω ≤ e`: the log factor is then not positive and every
    /// epoch after the first is clamped to one step.
    pub degenerate: bool,
}

impl EpochSchedule {
    pub fn total(&self) -> u64 {
        *self.big_t.last().expect("schedule has at least one epoch")
    }
}

/// `ℓ* = ⌈log(8/β)/log(7/3)⌉`, `c_{n,δ} = log¹⁰(10n(ℓ*+1)/δ)`, `ω = n/c_{n,δ}`,
/// `t₀ = ⌈√n⌉` and `t_ℓ = ⌈10 ω^{6a_ℓ} log ω⌉`.
pub fn epoch_schedule(n: usize, delta: f64, beta: f64) -> Result<EpochSchedule> {
    if n == 0 {
        return Err(Error::arg("n must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::arg("δ must lie in (0, 1)"));
    }
    if !(beta > 0.0 && beta <= 0.125) {
        return Err(Error::arg("β must lie in (0, 1/8]"));
    }
    let ell_star = ((8.0 / beta).ln() / (7.0f64 / 3.0).ln()).ceil() as usize;
    let nf = n as f64;
    let c_n_delta = (10.0 * nf * (ell_star + 1) as f64 / delta).ln().powi(10);
    let omega = nf / c_n_delta;
    let log_omega = omega.ln();
    let degenerate = log_omega <= 1.0;
    let trace = localization_recursion(RecursionKind::UnivariateA, 1.0 / 16.0, ell_star.max(1))?;
    let a: Vec<f64> = trace.values[..=ell_star].to_vec();
    let mut t_ell = vec![nf.sqrt().ceil() as u64];
    for &al in &a[1..] {
        let t = (10.0 * omega.powf(6.0 * al) * log_omega).ceil();
        t_ell.push(if t >= 1.0 { t as u64 } else { 1 });
    }
    let big_t = t_ell
        .iter()
        .scan(0u64, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    Ok(EpochSchedule {
        n,
        omega,
        c_n_delta,
        a,
        t_ell,
        big_t,
        ell_star,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: usize,
    pub mean_abs_dev: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentCheck {
    pub k: u32,
    pub target: f64,
    pub rows: Vec<MomentRow>,
    /// Fit of the mean deviation against `n`; `None` for fewer than three `n`.
    pub fit: Option<RateFit>,
}

/// `(2k-1)!!`.
pub fn double_factorial_odd(k: u32) -> f64 {
    (1..=k).map(|j| (2 * j - 1) as f64).product()
}

/// Mean absolute deviation `|μ̂_{2k} - (2k-1)!!|` over independent samples
/// for each `n`, and its log-log slope against `n`.
pub fn moment_concentration_check(
    k: u32,
    n_grid: &[usize],
    trials: usize,
    rng: &RngSpec,
) -> Result<MomentCheck> {
    if !(1..=5).contains(&k) {
        return Err(Error::arg("moment order k must lie in 1..=5"));
    }
    if trials == 0 || n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::arg("need trials >= 1 and positive n"));
    }
    let target = double_factorial_odd(k);
    let rows: Vec<MomentRow> = n_grid
        .iter()
        .map(|&n| {
            let devs: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|i| {
                    let data = sample_standard_normal(n, 1, &rng.child(n as u64).child(i as u64))?;
                    let m = data
                        .samples()
                        .iter()
                        .map(|x| x.powi(2 * k as i32))
                        .sum::<f64>()
                        / n as f64;
                    Ok((m - target).abs())
                })
                .collect::<Result<_>>()?;
            let (mean, stderr) = mean_stderr(&devs);
            Ok(MomentRow {
                n,
                mean_abs_dev: mean,
                stderr,
            })
        })
        .collect::<Result<_>>()?;
    let fit = if rows.len() >= 3 {
        let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let ds: Vec<f64> = rows.iter().map(|r| r.mean_abs_dev).collect();
        Some(rate_fit(&ns, &ds)?)
    } else {
        None
    };
    Ok(MomentCheck {
        k,
        target,
        rows,
        fit,
    })
}

/// `‖M̃_{n,d}(θ⁰)‖` for a fresh `N(0, I_d)` sample of size `n`.
pub fn one_step_bound_check(
    theta0: &[f64],
    n: usize,
    d: usize,
    rng: &RngSpec,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if theta0.len() != d {
        return Err(Error::arg("θ⁰ must have dimension d"));
    }
    let r = theta0.iter().map(|t| t * t).sum::<f64>().sqrt();
    if r > (d as f64).sqrt() * (1.0 + 1e-12) {
        return Err(Error::arg("one-step check needs ‖θ⁰‖ ≤ √d"));
    }
    let data = sample_standard_normal(n, d, rng)?;
    let op = PopulationOperator::pseudo(data.z_nd(), d)?;
    Ok(op.radial(r, quad)?.value)
}

/// The `N(θ, σ²)` density.
pub fn gaussian_density(x: f64, theta: f64, sigma2: f64) -> f64 {
    let z = x - theta;
    (-0.5 * z * z / sigma2).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
}

/// Central finite-difference estimate of `∂²φ/∂θ² - 2 ∂φ/∂σ²` for the
/// Gaussian density `φ(x; θ, σ²)`; zero up to `O(h²)`.
pub fn pde_residual(x: f64, theta: f64, sigma2: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || !(sigma2 > h) {
        return Err(Error::arg("need 0 < h < σ²"));
    }
    let phi = |t: f64, s: f64| gaussian_density(x, t, s);
    let d2_theta =
        (phi(theta + h, sigma2) - 2.0 * phi(theta, sigma2) + phi(theta - h, sigma2)) / (h * h);
    let d_sigma2 = (phi(theta, sigma2 + h) - phi(theta, sigma2 - h)) / (2.0 * h);
    Ok(d2_theta - 2.0 * d_sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tail_matches_direct_difference() {
        for u in [0.2f64, 0.59, 0.61, 1.5, -0.9] {
            let direct = u.tanh() - u + u.powi(3) / 3.0;
            assert!((tanh_tail(u, 5) - direct).abs() < 1e-15, "u={u}");
        }
        assert_eq!(tanh_tail(0.3, 1), 0.3f64.tanh());
    }

    #[test]
    fn bounds_at_one_and_zero() {
        let b = tanh_poly_bounds(0.0);
        assert_eq!([b.lower4, b.upper6, b.lower8, b.upper10], [0.0; 4]);
        let b = tanh_poly_bounds(1.0);
        assert_abs_diff_eq!(
            b.lower8,
            1.0 - 1.0 / 3.0 + 2.0 / 15.0 - 17.0 / 315.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(b.lower8, 0.746_031_746, epsilon = 1e-9);
        assert_abs_diff_eq!(b.upper10, 0.767_901_234, epsilon = 1e-9);
        assert!(b.lower8 <= 1f64.tanh() && 1f64.tanh() <= b.upper10);
    }

    #[test]
    fn margins_agree_with_plain_differences_away_from_zero() {
        for x in [0.7f64, 1.3, -2.0, 4.5] {
            let b = tanh_poly_bounds(x);
            let xt = x * x.tanh();
            let m = TanhPolyBounds::margins(x);
            let plain = [xt - b.lower4, b.upper6 - xt, xt - b.lower8, b.upper10 - xt];
            for (a, p) in m.iter().zip(plain) {
                assert!((a - p).abs() <= 1e-12 * (1.0 + p.abs()), "x={x}");
            }
        }
    }

    #[test]
    fn population_betas() {
        let mu = gaussian_even_moments();
        assert_eq!(operator_series_coeffs(3, 1.0, &mu).unwrap(), 0.0);
        assert_abs_diff_eq!(
            operator_series_coeffs(5, 1.0, &mu).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            operator_series_coeffs(7, 1.0, &mu).unwrap(),
            -2.0 / 3.0,
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(
            operator_series_coeffs(9, 1.0, &mu).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert!(operator_series_coeffs(4, 1.0, &mu).is_err());
        assert!(operator_series_coeffs(9, 1.0, &mu[..3]).is_err());
    }

    #[test]
    fn extracted_coefficients_match_population_betas() {
        let c = corrected_odd_coefficients(1e-2, &QuadratureSpec::default()).unwrap();
        assert!(c[0].abs() < 1e-10 && c[1].abs() < 1e-9, "{c:?}");
        assert!((c[2] + 2.0 / 3.0).abs() < 1e-5, "{c:?}");
    }

    #[test]
    fn recursion_fixed_points_exact() {
        assert_eq!(
            RecursionKind::MultivariateAlpha.fixed_point(),
            Ratio::new(1, 4)
        );
        assert_eq!(RecursionKind::UnivariateA.fixed_point(), Ratio::new(1, 8));
        assert_eq!(
            RecursionKind::UnivariateCorollary.fixed_point(),
            Ratio::new(1, 12)
        );
        assert_eq!(
            RecursionKind::UnivariateA.step_exact(Ratio::new(1, 16)),
            Ratio::new(11, 112)
        );
        assert!(localization_recursion(RecursionKind::UnivariateA, 0.0, 0).is_err());
    }

    #[test]
    fn epoch_schedule_shape() {
        let s = epoch_schedule(1000, 0.1, 0.125).unwrap();
        assert_eq!(s.ell_star, 5);
        assert_eq!(s.t_ell[0], 32);
        assert_eq!(s.t_ell.len(), 6);
        assert!(s.big_t.windows(2).all(|w| w[1] > w[0]));
        assert!(epoch_schedule(1000, 1.0, 0.1).is_err());
        assert!(epoch_schedule(1000, 0.1, 0.2).is_err());
    }

    #[test]
    fn moment_check_single_draw() {
        let rng = RngSpec::new(5, 0);
        let check = moment_concentration_check(1, &[1], 1, &rng).unwrap();
        let x = sample_standard_normal(1, 1, &rng.child(1).child(0))
            .unwrap()
            .samples()[0];
        assert_eq!(check.rows[0].mean_abs_dev, (x * x - 1.0).abs());
        assert_eq!(check.target, 1.0);
        assert_eq!(double_factorial_odd(3), 15.0);
        assert!(check.fit.is_none());
    }

    #[test]
    fn one_step_zero_is_fixed() {
        let q = QuadratureSpec::default();
        let v = one_step_bound_check(&[0.0, 0.0], 100, 2, &RngSpec::new(1, 2), &q).unwrap();
        assert_eq!(v, 0.0);
        assert!(one_step_bound_check(&[2.0], 100, 1, &RngSpec::new(1, 2), &q).is_err());
    }

    #[test]
    fn pde_residual_small() {
        let r = pde_residual(0.3, 0.2, 1.0, 1e-4).unwrap();
        assert!(r.abs() <= 1e-6, "{r}");
    }
}
