//! The data-dependent map `H(a) = (1/n) Σ X_i tanh(X_iᵀ a)`.
//!
//! Both symmetric fits update their location through `H`: the isotropic fit
//! at `a = θ / (Z_{n,d} - ‖θ‖²/d)` and the tied-diagonal fit at `a = Σ⁻¹θ`.
//! Evaluating `H` directly costs `O(nd)`. In one and two dimensions long EM
//! runs replace it by a tensor Chebyshev interpolant on a box around the
//! origin; `H` is odd and entire along real directions, its nearest complex
//! singularities sit at distance `π / (2 max |X_ik|)`, so the interpolant
//! converges geometrically and is checked against the direct sum before use.

use std::f64::consts::PI;

use crate::model::DataSet;

/// Direct evaluation of `H(a)` with the library `tanh`.
pub fn tanh_map(data: &DataSet, a: &[f64]) -> Vec<f64> {
    map_with(data, a, f64::tanh)
}

/// `tanh` through a single `exp`; absolute error stays within a few ulps,
/// relative error grows like `ε/|u|` near zero.
#[inline]
fn tanh_via_exp(u: f64) -> f64 {
    let e = (-2.0 * u.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(u)
}

/// Direct evaluation of `H(a)` with [`tanh_via_exp`], about twice as fast as
/// [`tanh_map`]; used by the accelerated kernel.
pub fn tanh_map_fast(data: &DataSet, a: &[f64]) -> Vec<f64> {
    map_with(data, a, tanh_via_exp)
}

#[inline(always)]
fn map_with<F: Fn(f64) -> f64>(data: &DataSet, a: &[f64], tanh: F) -> Vec<f64> {
    let d = data.d();
    let n = data.n() as f64;
    let mut out = vec![0.0; d];
    match d {
        1 => {
            let a0 = a[0];
            out[0] = data
                .samples()
                .iter()
                .map(|&x| x * tanh(x * a0))
                .sum::<f64>();
        }
        2 => {
            let (a0, a1) = (a[0], a[1]);
            let (mut s0, mut s1) = (0.0, 0.0);
            for row in data.samples().chunks_exact(2) {
                let t = tanh(row[0] * a0 + row[1] * a1);
                s0 += row[0] * t;
                s1 += row[1] * t;
            }
            out[0] = s0;
            out[1] = s1;
        }
        _ => {
            for row in data.rows() {
                let u: f64 = row.iter().zip(a).map(|(x, y)| x * y).sum();
                let t = tanh(u);
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += x * t;
                }
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Absolute accuracy an interpolant must reach on its validation points.
const SURROGATE_TOL: f64 = 1e-13;

/// Tensor Chebyshev interpolant of `H` on `[-A_1, A_1] × … × [-A_d, A_d]`.
#[derive(Debug, Clone)]
pub struct ChebyshevSurrogate {
    half_widths: Vec<f64>,
    degree: usize,
    // coeffs[k][idx] for output k; idx = j (d=1) or j * degree + l (d=2)
    coeffs: Vec<Vec<f64>>,
}

impl ChebyshevSurrogate {
    /// Interpolates `H` with `degree` first-kind Chebyshev points per axis.
    ///
    /// Returns `None` for `d > 2` or when the interpolant misses
    /// [`SURROGATE_TOL`] on a set of off-grid validation points.
    pub fn build(data: &DataSet, half_widths: &[f64], degree: usize) -> Option<Self> {
        let d = data.d();
        if d > 2 || half_widths.len() != d || degree < 4 || degree % 2 != 0 {
            return None;
        }
        let m = degree;
        let pts: Vec<f64> = (0..m)
            .map(|j| ((j as f64 + 0.5) * PI / m as f64).cos())
            .collect();
        let surrogate = match d {
            1 => {
                // odd in a: evaluate the positive half and mirror
                let mut vals = vec![0.0; m];
                for j in 0..m / 2 {
                    let v = tanh_map_fast(data, &[pts[j] * half_widths[0]])[0];
                    vals[j] = v;
                    vals[m - 1 - j] = -v;
                }
                let coeffs = chebyshev_coefficients(&pts, &vals);
                Self {
                    half_widths: half_widths.to_vec(),
                    degree: m,
                    coeffs: vec![coeffs],
                }
            }
            _ => {
                let mut grid = [vec![0.0; m * m], vec![0.0; m * m]];
                for j in 0..m / 2 {
                    for l in 0..m {
                        let v = tanh_map_fast(
                            data,
                            &[pts[j] * half_widths[0], pts[l] * half_widths[1]],
                        );
                        let (jm, lm) = (m - 1 - j, m - 1 - l);
                        for k in 0..2 {
                            grid[k][j * m + l] = v[k];
                            grid[k][jm * m + lm] = -v[k];
                        }
                    }
                }
                let coeffs = grid
                    .iter()
                    .map(|g| chebyshev_coefficients_2d(&pts, g))
                    .collect();
                Self {
                    half_widths: half_widths.to_vec(),
                    degree: m,
                    coeffs,
                }
            }
        };
        surrogate.validate(data).then_some(surrogate)
    }

    fn validate(&self, data: &DataSet) -> bool {
        // fixed irrational fractions of the box, away from the nodes
        const FRACTIONS: [[f64; 2]; 5] = [
            [0.618_033_988_749_894_9, -0.414_213_562_373_095_1],
            [-0.932_050_807_568_877_3, 0.267_949_192_431_122_7],
            [0.141_592_653_589_793_2, 0.718_281_828_459_045_1],
            [0.997_3, -0.995_1],
            [-std::f64::consts::LOG10_2, -0.845_098_040_014_256_8],
        ];
        FRACTIONS.iter().all(|f| {
            let a: Vec<f64> = self
                .half_widths
                .iter()
                .zip(f)
                .map(|(w, fr)| w * fr)
                .collect();
            let exact = tanh_map(data, &a);
            let approx = self.eval(&a).expect("validation point lies in the box");
            exact
                .iter()
                .zip(&approx)
                .all(|(e, p)| (e - p).abs() <= SURROGATE_TOL)
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.half_widths.len()
            && a.iter().zip(&self.half_widths).all(|(x, w)| x.abs() <= *w)
    }

    /// Interpolated `H(a)`, or `None` outside the box.
    pub fn eval(&self, a: &[f64]) -> Option<Vec<f64>> {
        if !self.contains(a) {
            return None;
        }
        let m = self.degree;
        match a.len() {
            1 => Some(vec![clenshaw(&self.coeffs[0], a[0] / self.half_widths[0])]),
            _ => {
                let tx = chebyshev_values(a[0] / self.half_widths[0], m);
                let ty = chebyshev_values(a[1] / self.half_widths[1], m);
                Some(
                    self.coeffs
                        .iter()
                        .map(|c| {
                            let mut total = 0.0;
                            for (j, &txj) in tx.iter().enumerate() {
                                let row = &c[j * m..(j + 1) * m];
                                let inner: f64 = row.iter().zip(&ty).map(|(c, t)| c * t).sum();
                                total += txj * inner;
                            }
                            total
                        })
                        .collect(),
                )
            }
        }
    }
}

fn chebyshev_values(x: f64, m: usize) -> Vec<f64> {
    let mut t = vec![0.0; m];
    t[0] = 1.0;
    if m > 1 {
        t[1] = x;
    }
    for k in 2..m {
        t[k] = 2.0 * x * t[k - 1] - t[k - 2];
    }
    t
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c[0]
}

/// Coefficients of the interpolant through first-kind Chebyshev points,
/// with the `c_0` halving already applied.
fn chebyshev_coefficients(pts: &[f64], vals: &[f64]) -> Vec<f64> {
    let m = pts.len();
    let mut c = vec![0.0; m];
    for (k, ck) in c.iter_mut().enumerate() {
        let s: f64 = (0..m)
            .map(|j| vals[j] * ((k as f64) * (j as f64 + 0.5) * PI / m as f64).cos())
            .sum();
        *ck = 2.0 * s / m as f64;
    }
    c[0] *= 0.5;
    c
}

fn chebyshev_coefficients_2d(pts: &[f64], grid: &[f64]) -> Vec<f64> {
    let m = pts.len();
    // transform along the second axis, then the first
    let mut tmp = vec![0.0; m * m];
    for j in 0..m {
        let row = chebyshev_coefficients(pts, &grid[j * m..(j + 1) * m]);
        tmp[j * m..(j + 1) * m].copy_from_slice(&row);
    }
    let mut out = vec![0.0; m * m];
    let mut column = vec![0.0; m];
    for l in 0..m {
        for j in 0..m {
            column[j] = tmp[j * m + l];
        }
        let col = chebyshev_coefficients(pts, &column);
        for j in 0..m {
            out[j * m + l] = col[j];
        }
    }
    out
}

/// Evaluates `H`, switching to a validated interpolant once enough direct
/// evaluations have been spent to pay for building one.
///
/// The interpolation box is a cube around the origin, twice as wide as the
/// largest coordinate seen since the last build. Leaving the box falls back
/// to direct evaluation; repeated misses discard the interpolant so a wider
/// one can be built later.
#[derive(Debug)]
pub struct TanhKernel<'a> {
    data: &'a DataSet,
    accelerate: bool,
    since_build: usize,
    misses: usize,
    attempts: usize,
    failures: usize,
    surrogate: Option<ChebyshevSurrogate>,
    recent_max: f64,
}

impl<'a> TanhKernel<'a> {
    const MAX_ATTEMPTS: usize = 4;

    pub fn new(data: &'a DataSet, accelerate: bool) -> Self {
        Self {
            data,
            accelerate: accelerate && data.d() <= 2,
            since_build: 0,
            misses: 0,
            attempts: 0,
            failures: 0,
            surrogate: None,
            recent_max: 0.0,
        }
    }

    pub fn data(&self) -> &DataSet {
        self.data
    }

    /// Whether an interpolant is currently in use.
    pub fn is_accelerated(&self) -> bool {
        self.surrogate.is_some()
    }

    fn width(&self) -> f64 {
        (2.0 * self.recent_max).max(0.3)
    }

    fn degree(&self, width: f64) -> usize {
        let base = match (self.data.d(), width) {
            (1, w) if w <= 0.6 => 64,
            (1, _) => 96,
            (_, w) if w <= 0.35 => 32,
            (_, w) if w <= 0.7 => 48,
            _ => 64,
        };
        // widen after a failed validation
        base + 16 * self.failures
    }

    /// Direct evaluations a build costs.
    fn build_cost(&self, degree: usize) -> usize {
        match self.data.d() {
            1 => degree / 2,
            _ => degree * degree / 2,
        }
    }

    pub fn eval(&mut self, a: &[f64]) -> Vec<f64> {
        if let Some(s) = &self.surrogate {
            if let Some(v) = s.eval(a) {
                return v;
            }
            self.misses += 1;
            if self.misses > 8 {
                self.surrogate = None;
                self.misses = 0;
                self.since_build = 0;
            }
        }
        self.recent_max = a.iter().fold(self.recent_max, |m, x| m.max(x.abs()));
        self.since_build += 1;
        if self.accelerate && self.surrogate.is_none() && self.attempts < Self::MAX_ATTEMPTS {
            let width = self.width();
            let degree = self.degree(width);
            if self.since_build >= self.build_cost(degree) {
                self.attempts += 1;
                let widths = vec![width; self.data.d()];
                self.surrogate = ChebyshevSurrogate::build(self.data, &widths, degree);
                if self.surrogate.is_none() {
                    self.failures += 1;
                }
                self.since_build = 0;
                self.recent_max = 0.0;
            }
        }
        if self.accelerate {
            tanh_map_fast(self.data, a)
        } else {
            tanh_map(self.data, a)
        }
    }
}
