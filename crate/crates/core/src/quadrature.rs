//! Gauss–Hermite quadrature for expectations under the standard normal.
//!
//! Nodes and weights are computed by Newton iteration on the orthonormal
//! Hermite recurrence. The recurrence is rescaled on the fly so that rules
//! with several hundred nodes neither overflow nor lose the inner weights;
//! weights of far-out nodes underflow to zero, which is harmless.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rule for `E[f(V)]`, `V ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let (x, w) = physicists_rule(n);
        let scale = 1.0 / PI.sqrt();
        Self {
            nodes: x.iter().map(|&z| z * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|&v| v * scale).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Orthonormal Hermite values `(p_n(z), p_{n-1}(z))` divided by `e^scale`,
/// together with `scale`.
fn hermite_pair(n: usize, z: f64) -> (f64, f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut p1 = PIM4;
    let mut p2 = 0.0_f64;
    let mut log_scale = 0.0_f64;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
        let mag = p1.abs().max(p2.abs());
        if mag > 1e100 {
            p1 /= mag;
            p2 /= mag;
            log_scale += mag.ln();
        }
    }
    (p1, p2, log_scale)
}

/// Nodes and weights for the weight `e^{-x²}`.
///
/// Positive roots are bracketed by a sign scan of `p_n`, refined by
/// bisection and polished with Newton steps.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let upper = (2.0 * nf + 1.0).sqrt() + 1.0;
    // root spacing is at least ~π/√(2n+1); scan well below it
    let h = 0.1 * std::f64::consts::PI / (2.0 * nf + 1.0).sqrt();
    let mut brackets = Vec::with_capacity(n / 2);
    let mut lo = h * 0.5;
    let mut f_lo = hermite_pair(n, lo).0;
    while lo < upper && brackets.len() < n / 2 {
        let hi = lo + h;
        let f_hi = hermite_pair(n, hi).0;
        if f_lo.signum() != f_hi.signum() {
            brackets.push((lo, hi, f_lo));
        }
        lo = hi;
        f_lo = f_hi;
    }
    assert_eq!(
        brackets.len(),
        n / 2,
        "failed to bracket every Hermite root"
    );

    let weight = |z: f64| {
        let (_, p2, log_scale) = hermite_pair(n, z);
        let pp = (2.0 * nf).sqrt() * p2;
        2.0 / (pp * pp) * (-2.0 * log_scale).exp()
    };
    let mut roots: Vec<f64> = brackets
        .into_iter()
        .map(|(mut a, mut b, fa)| {
            for _ in 0..30 {
                let m = 0.5 * (a + b);
                if hermite_pair(n, m).0.signum() == fa.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            let mut z = 0.5 * (a + b);
            for _ in 0..3 {
                let (p1, p2, _) = hermite_pair(n, z);
                let pp = (2.0 * nf).sqrt() * p2;
                let next = z - p1 / pp;
                if !(next > a - h && next < b + h) {
                    break;
                }
                z = next;
            }
            z
        })
        .collect();
    roots.sort_by(|a, b| b.total_cmp(a));
    let mut x = Vec::with_capacity(n);
    x.extend(roots.iter().copied());
    if n % 2 == 1 {
        x.push(0.0);
    }
    x.extend(roots.iter().rev().map(|r| -r));
    let w = x.iter().map(|&z| weight(z.abs())).collect();
    (x, w)
}

/// Returns a shared rule with `n` nodes, computing it on first use.
pub fn rule(n: usize) -> Arc<GaussHermite> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().expect("quadrature cache poisoned").get(&n) {
        return Arc::clone(r);
    }
    let built = Arc::new(GaussHermite::new(n));
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .entry(n)
        .or_insert(built)
        .clone()
}

/// Node count and stabilisation threshold for Gauss–Hermite expectations.
///
/// Every evaluation is repeated with `2 * nodes - 1` nodes and fails if the
/// two values differ by more than `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes: usize,
    pub tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 201,
            tol: 1e-10,
        }
    }
}

/// A quadrature value with the node-doubling discrepancy as error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl QuadratureSpec {
    pub fn new(nodes: usize, tol: f64) -> Result<Self> {
        let spec = Self { nodes, tol };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 21 || self.nodes % 2 == 0 {
            return Err(Error::arg(format!(
                "quadrature needs an odd node count >= 21, got {}",
                self.nodes
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::arg("quadrature tolerance must be positive"));
        }
        Ok(())
    }

    /// The same spec with the node count doubled (kept odd).
    pub fn doubled(&self) -> Self {
        Self {
            nodes: 2 * self.nodes - 1,
            tol: self.tol,
        }
    }

    /// `E[f(V)]` for `V ~ N(0, 1)`, checked against the doubled rule.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> Result<Estimate> {
        self.validate()?;
        let coarse = rule(self.nodes).expect(&f);
        let fine = rule(self.doubled().nodes).expect(&f);
        let error = (fine - coarse).abs();
        if !fine.is_finite() || !(error <= self.tol) {
            return Err(Error::numerical(format!(
                "Gauss-Hermite did not stabilise: {coarse} vs {fine} with {} nodes",
                self.nodes
            )));
        }
        Ok(Estimate { value: fine, error })
    }

    /// Single-rule expectation without the doubling check.
    pub fn expect_unchecked<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        rule(self.nodes).expect(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn double_factorial(k: u32) -> f64 {
        (1..=k).map(|j| (2 * j - 1) as f64).product()
    }

    #[test]
    fn weights_sum_to_one() {
        for n in [21, 201, 401, 801] {
            let r = GaussHermite::new(n);
            assert_abs_diff_eq!(r.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn even_moments_are_double_factorials() {
        let r = GaussHermite::new(201);
        for k in 1..=10u32 {
            let m = r.expect(|v| v.powi(2 * k as i32));
            let exact = double_factorial(k);
            assert!((m - exact).abs() <= 1e-12 * exact, "k={k}: {m} vs {exact}");
        }
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        let r = GaussHermite::new(21);
        let x = r.nodes();
        for i in 0..x.len() {
            assert_abs_diff_eq!(x[i], -x[x.len() - 1 - i], epsilon = 1e-14);
        }
        assert!(x.windows(2).all(|p| p[0] > p[1]));
        assert_eq!(x[10], 0.0);
    }

    #[test]
    fn matches_closed_form_for_cosine() {
        // E[cos V] = e^{-1/2}
        let est = QuadratureSpec::default().expect(f64::cos).unwrap();
        assert_abs_diff_eq!(est.value, (-0.5f64).exp(), epsilon = 1e-14);
        assert!(est.error < 1e-14);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(QuadratureSpec::new(20, 1e-10).is_err());
        assert!(QuadratureSpec::new(23, 1e-10).is_ok());
        assert!(QuadratureSpec::new(19, 1e-10).is_err());
        assert!(QuadratureSpec::new(201, 0.0).is_err());
    }
}
