use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::gaussian_cdf;

/// Probe radii for the limit covariance of the centered recurrence process:
/// the two evaluation points (r,s) and (r2,s2).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalLimitParams {
    pub r: f64,
    pub s: f64,
    pub r2: f64,
    pub s2: f64,
}

impl NormalLimitParams {
    pub fn new(r: f64, s: f64, r2: f64, s2: f64) -> Result<Self> {
        for (name, v) in [("r", r), ("s", s), ("r2", r2), ("s2", s2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam {
                    name: name.into(),
                    reason: format!("radius must be positive and finite, got {v}"),
                });
            }
        }
        Ok(Self { r, s, r2, s2 })
    }
}

fn phi(x: f64) -> f64 {
    gaussian_cdf(0.0, 1.0, x)
}

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// P(|X1 − X2| < r) for independent standard normals: 2Φ(r/√2) − 1.
pub fn p2_normal(r: f64) -> f64 {
    2.0 * phi(r / std::f64::consts::SQRT_2) - 1.0
}

/// Gauss-Legendre nodes and weights on [−1, 1] by Newton iteration on the
/// Legendre recurrence. Order 20 per panel puts the error of the smooth
/// integrands here far below the 1e−10 target.
fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

/// ∫ f over [−10, 10] by composite Gauss-Legendre with `panels` panels of
/// order 20. The integrands are bounded by the standard normal density, so
/// the tail beyond |x| = 10 is below 1e−22.
fn integrate(panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_legendre(20);
    let (lo, hi) = (-10.0, 10.0);
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + width * p as f64;
        let mid = a + 0.5 * width;
        let half = 0.5 * width;
        let mut panel = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            panel += w * f(mid + half * x);
        }
        total += panel * half;
    }
    total
}

const P3_PANELS: usize = 40;

/// The cross-moment P(|X1−X2| < a, |X1−X3| < b) for independent standard
/// normals: ∫ (Φ(x+a) − Φ(x−a))(Φ(x+b) − Φ(x−b)) φ(x) dx.
pub fn p3_cross_normal(a: f64, b: f64) -> f64 {
    p3_cross_with_panels(a, b, P3_PANELS)
}

/// Panel-count hook for the convergence tests.
pub fn p3_cross_with_panels(a: f64, b: f64, panels: usize) -> f64 {
    integrate(panels, |x| (phi(x + a) - phi(x - a)) * (phi(x + b) - phi(x - b)) * pdf(x))
}

/// P(|X1−X2| < r, |X1−X3| < r), the diagonal cross-moment.
pub fn p3_normal(r: f64) -> f64 {
    p3_cross_normal(r, r)
}

/// Limit variance surface for standard normal marginals:
/// 4·(p3(r) − p2(r)²)·(p3(s) − p2(s)²).
pub fn sigma2_normal(r: f64, s: f64) -> f64 {
    4.0 * (p3_normal(r) - p2_normal(r).powi(2)) * (p3_normal(s) - p2_normal(s).powi(2))
}

/// Limit covariance of the centered process at (r,s) and (r2,s2) for
/// standard normal marginals. Each factor is the covariance of the two
/// pair-distance indicators sharing one observation, which is the
/// cross-moment minus the product of marginal probabilities; on the
/// diagonal r=r2, s=s2 it reduces to sigma2_normal.
pub fn asymptotic_cov(params: NormalLimitParams) -> f64 {
    let NormalLimitParams { r, s, r2, s2 } = params;
    4.0 * (p3_cross_normal(r, r2) - p2_normal(r) * p2_normal(r2))
        * (p3_cross_normal(s, s2) - p2_normal(s) * p2_normal(s2))
}

/// The diagonal curve on the standard-deviation scale:
/// √(sigma2_normal(r,r)) = 2·(p3(r) − p2(r)²). This is the scale on which
/// the curve's maximum is 0.0641 near r = 1.35.
pub fn diagonal_sigma(r: f64) -> f64 {
    2.0 * (p3_normal(r) - p2_normal(r).powi(2))
}

/// Golden-section maximizer on [a, b] for a unimodal function; returns
/// (argmax, max) once the bracket shrinks below tol.
pub fn golden_section_max(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}

/// Diagonal maximum of the standard-deviation curve, located by
/// golden-section search on (0.5, 2.5) with tolerance 1e−4.
pub fn diagonal_sigma_max() -> (f64, f64) {
    golden_section_max(diagonal_sigma, 0.5, 2.5, 1e-4)
}
