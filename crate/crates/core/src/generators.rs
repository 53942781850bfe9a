use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Metric, PairedSample};
use crate::error::{Error, Result};
use crate::seed::{rng_for, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlternativeName {
    Parabola,
    TwoParabolas,
    Circle,
    Diamond,
    WShape,
    FourClouds,
    Logarithmic,
    Epsilon,
    Quadratic,
    TwoDPairwise,
    Ar1,
    Arma21,
    Bm,
    Fbm,
    Fou,
    Fou2,
}

impl AlternativeName {
    pub fn is_series(self) -> bool {
        matches!(
            self,
            AlternativeName::Ar1
                | AlternativeName::Arma21
                | AlternativeName::Bm
                | AlternativeName::Fbm
                | AlternativeName::Fou
                | AlternativeName::Fou2
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlternativeName::Parabola => "parabola",
            AlternativeName::TwoParabolas => "two_parabolas",
            AlternativeName::Circle => "circle",
            AlternativeName::Diamond => "diamond",
            AlternativeName::WShape => "w_shape",
            AlternativeName::FourClouds => "four_clouds",
            AlternativeName::Logarithmic => "logarithmic",
            AlternativeName::Epsilon => "epsilon",
            AlternativeName::Quadratic => "quadratic",
            AlternativeName::TwoDPairwise => "two_d_pairwise",
            AlternativeName::Ar1 => "ar1",
            AlternativeName::Arma21 => "arma21",
            AlternativeName::Bm => "bm",
            AlternativeName::Fbm => "fbm",
            AlternativeName::Fou => "fou",
            AlternativeName::Fou2 => "fou2",
        }
    }
}

impl std::str::FromStr for AlternativeName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            Error::InvalidParam {
                name: "alternative".into(),
                reason: format!("unknown alternative {s:?}"),
            }
        })
    }
}

/// One sampling task: which model, its parameters, sample size, seed.
///
/// Parameter schemas (unknown names rejected):
///   scalar and vector models: none
///   ar1:    phi (default 0.9), link (default 1), len (default 100)
///   arma21: phi1 (0.2), phi2 (0.5), theta (0.2), link, len
///   bm:     link, len
///   fbm:    h (0.7), link, len
///   fou:    h (0.7), lambda (0.3), sigma (1), len
///   fou2:   h (0.7), lambda1 (0.3), lambda2 (0.8), sigma (1), len
///
/// Link codes select how the Y trajectory is built from X:
///   0: Y_t = ε_t            1: Y_t = X_t² + 3ε_t
///   2: Y_t = √|X_t| + Z_t, sd(Z) = sd of the realized √|X| trajectory
///   3: Y_t = ε_t·X_t        4: Y_t = √|X_t| + ε_t
///   5: Y_t = ε_t·X_t + 3ε′_t
///   6: Y = an independent standard Brownian trajectory
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeSpec {
    pub name: AlternativeName,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Power studies override n and seed per cell, so configs may omit both.
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl AlternativeSpec {
    pub fn new(name: AlternativeName, n: usize, seed: u64) -> Self {
        Self { name, params: BTreeMap::new(), n, seed }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

/// Resolved parameters: defaults overlaid with the spec's map, unknown
/// names rejected.
fn resolve_params(
    spec: &AlternativeSpec,
    allowed: &[(&str, f64)],
) -> Result<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> =
        allowed.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    for (key, &value) in &spec.params {
        if !out.contains_key(key.as_str()) {
            return Err(Error::InvalidParam {
                name: key.clone(),
                reason: format!("unknown parameter for {}", spec.name.as_str()),
            });
        }
        if !value.is_finite() {
            return Err(Error::InvalidParam {
                name: key.clone(),
                reason: "parameter must be finite".into(),
            });
        }
        out.insert(key.clone(), value);
    }
    Ok(out)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParam { name: "n".into(), reason: "need n ≥ 1".into() });
    }
    Ok(())
}

/// Draws a sample per the spec. Scalar and vector models directly; series
/// models delegate to `generate_series`.
pub fn generate(spec: &AlternativeSpec) -> Result<PairedSample> {
    if spec.name.is_series() {
        return generate_series(spec);
    }
    check_n(spec.n)?;
    resolve_params(spec, &[])?;
    let mut rng = rng_for(spec.seed, streams::GENERATE, 0);
    let n = spec.n;
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut ys: Vec<Vec<f64>> = Vec::with_capacity(n);
    let normal = rand_distr::StandardNormal;
    for _ in 0..n {
        match spec.name {
            AlternativeName::Parabola => {
                let x = rng.gen_range(-1.0..1.0);
                let u: f64 = rng.gen_range(0.0..1.0);
                xs.push(vec![x]);
                ys.push(vec![(x * x + u) / 2.0]);
            }
            AlternativeName::TwoParabolas => {
                let x = rng.gen_range(-1.0..1.0);
                let u: f64 = rng.gen_range(0.0..1.0);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                xs.push(vec![x]);
                ys.push(vec![sign * (x * x + u / 2.0)]);
            }
            AlternativeName::Circle => {
                let u = rng.gen_range(-1.0..1.0);
                let z1: f64 = rng.sample(normal);
                let z2: f64 = rng.sample(normal);
                let arg = std::f64::consts::PI * u;
                xs.push(vec![arg.sin() + z1 / 8.0]);
                ys.push(vec![arg.cos() + z2 / 8.0]);
            }
            AlternativeName::Diamond => {
                let u1 = rng.gen_range(-1.0..1.0);
                let u2 = rng.gen_range(-1.0..1.0);
                let (sin_t, cos_t) = (std::f64::consts::FRAC_PI_4).sin_cos();
                xs.push(vec![sin_t * u1 + cos_t * u2]);
                ys.push(vec![-sin_t * u1 + cos_t * u2]);
            }
            AlternativeName::WShape => {
                let u = rng.gen_range(-1.0..1.0);
                let u1 = rng.gen_range(0.0..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                xs.push(vec![u + u1 / 3.0]);
                ys.push(vec![4.0 * (u * u - 0.5).powi(2) + u2 / n as f64]);
            }
            AlternativeName::FourClouds => {
                let zx: f64 = rng.sample(normal);
                let cx = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let zy: f64 = rng.sample(normal);
                let cy = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                xs.push(vec![cx + zx / 3.0]);
                ys.push(vec![cy + zy / 3.0]);
            }
            AlternativeName::Logarithmic => {
                let x: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(normal)).collect();
                let y = x.iter().map(|&v| (v * v).ln()).collect();
                xs.push(x);
                ys.push(y);
            }
            AlternativeName::Epsilon => {
                let x: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(normal)).collect();
                let y = x.iter().map(|&v| rng.sample::<f64, _>(normal) * v).collect();
                xs.push(x);
                ys.push(y);
            }
            AlternativeName::Quadratic => {
                let x: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(normal)).collect();
                let sd3 = 3.0f64.sqrt();
                let y = (0..5)
                    .map(|i| {
                        let e = sd3 * rng.sample::<f64, _>(normal);
                        if i < 2 {
                            x[i] + 4.0 * x[i] * x[i] + e
                        } else {
                            e
                        }
                    })
                    .collect();
                xs.push(x);
                ys.push(y);
            }
            AlternativeName::TwoDPairwise => {
                let x: f64 = rng.sample(normal);
                let z0: f64 = rng.sample(normal);
                let y1: f64 = rng.sample(normal);
                let y2 = z0.abs() * (x * y1).signum();
                xs.push(vec![x]);
                ys.push(vec![y1, y2]);
            }
            _ => unreachable!("series handled above"),
        }
    }
    let metric_x = if xs[0].len() == 1 { Metric::Absolute } else { Metric::Euclidean };
    let metric_y = if ys[0].len() == 1 { Metric::Absolute } else { Metric::Euclidean };
    PairedSample::new(xs, ys, metric_x, metric_y)
}

fn param_usize(params: &BTreeMap<String, f64>, key: &str) -> Result<usize> {
    let v = params[key];
    if v < 1.0 || v.fract() != 0.0 {
        return Err(Error::InvalidParam {
            name: key.into(),
            reason: format!("must be a positive integer, got {v}"),
        });
    }
    Ok(v as usize)
}

fn check_link(link: f64) -> Result<u8> {
    if link.fract() != 0.0 || !(0.0..=6.0).contains(&link) {
        return Err(Error::InvalidParam {
            name: "link".into(),
            reason: format!("link code must be an integer in 0..=6, got {link}"),
        });
    }
    Ok(link as u8)
}

fn check_unit_interval(name: &str, v: f64) -> Result<f64> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidParam {
            name: name.into(),
            reason: format!("must lie in (0,1), got {v}"),
        });
    }
    Ok(v)
}

fn check_positive(name: &str, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::InvalidParam {
            name: name.into(),
            reason: format!("must be positive, got {v}"),
        });
    }
    Ok(v)
}

/// Standard Brownian trajectory at times 0, Δ, ..., (l−1)Δ with Δ = 1/l.
fn brownian(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
    let sd = (1.0 / l as f64).sqrt();
    let mut path = Vec::with_capacity(l);
    let mut level = 0.0;
    path.push(level);
    for _ in 1..l {
        level += sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
        path.push(level);
    }
    path
}

/// Y trajectory from the X trajectory per the link code.
fn apply_link(rng: &mut ChaCha8Rng, link: u8, x: &[f64], l: usize) -> Vec<f64> {
    let normal = rand_distr::StandardNormal;
    match link {
        0 => (0..l).map(|_| rng.sample::<f64, _>(normal)).collect(),
        1 => x.iter().map(|&v| v * v + 3.0 * rng.sample::<f64, _>(normal)).collect(),
        2 => {
            let root: Vec<f64> = x.iter().map(|&v| v.abs().sqrt()).collect();
            let mean = root.iter().sum::<f64>() / l as f64;
            let var = root.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>()
                / (l as f64 - 1.0);
            let sd = var.sqrt();
            root.iter().map(|&v| v + sd * rng.sample::<f64, _>(normal)).collect()
        }
        3 => x.iter().map(|&v| v * rng.sample::<f64, _>(normal)).collect(),
        4 => x.iter().map(|&v| v.abs().sqrt() + rng.sample::<f64, _>(normal)).collect(),
        5 => x
            .iter()
            .map(|&v| {
                let e: f64 = rng.sample(normal);
                let e2: f64 = rng.sample(normal);
                e * v + 3.0 * e2
            })
            .collect(),
        6 => brownian(rng, l),
        _ => unreachable!("validated by check_link"),
    }
}

/// Cached lower Cholesky factor of the one-sided fractional Brownian
/// covariance ½(s^{2H}+t^{2H}−|t−s|^{2H}) at times kΔ, k=1..m, Δ=1/l.
fn fbm_factor(h: f64, m: usize, l: usize) -> Result<Arc<DMatrix<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize, usize), Arc<DMatrix<f64>>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (h.to_bits(), m, l);
    if let Some(factor) = cache.lock().unwrap().get(&key) {
        return Ok(factor.clone());
    }
    let dt = 1.0 / l as f64;
    let two_h = 2.0 * h;
    let cov = DMatrix::from_fn(m, m, |i, j| {
        let s = (i + 1) as f64 * dt;
        let t = (j + 1) as f64 * dt;
        0.5 * (s.powf(two_h) + t.powf(two_h) - (s - t).abs().powf(two_h))
    });
    let factor = Cholesky::new(cov)
        .ok_or_else(|| Error::InvalidParam {
            name: "h".into(),
            reason: format!("covariance factorization failed for h = {h}"),
        })?
        .unpack();
    let factor = Arc::new(factor);
    cache.lock().unwrap().insert(key, factor.clone());
    Ok(factor)
}

fn fbm_path(rng: &mut ChaCha8Rng, factor: &DMatrix<f64>) -> Vec<f64> {
    let m = factor.nrows();
    let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    (factor * z).data.into()
}

/// Exponential-kernel recursion over driver increments:
/// Y_{k} = e^{−λΔ}·(Y_{k−1} + σ·ΔX_k), Y_0 = 0. Returns all m points.
fn fou_recursion(increments: &[f64], lambda: f64, sigma: f64, dt: f64) -> Vec<f64> {
    let decay = (-lambda * dt).exp();
    let mut y = 0.0;
    increments
        .iter()
        .map(|&dx| {
            y = decay * (y + sigma * dx);
            y
        })
        .collect()
}

/// Driver path plus one filtered trajectory per λ, all on times kΔ (k=1..l)
/// after a burn-in of ⌈5·l/λ_min⌉ steps. The returned driver is re-based to
/// start at the observation window (stationary increments make this exact
/// in distribution).
fn fou_core(
    rng: &mut ChaCha8Rng,
    h: f64,
    lambdas: &[f64],
    sigma: f64,
    l: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let lambda_min = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let burn = (5.0 * l as f64 / lambda_min).ceil() as usize;
    let m = burn + l;
    let factor = fbm_factor(h, m, l)?;
    let path = fbm_path(rng, &factor);
    let mut increments = Vec::with_capacity(m);
    let mut prev = 0.0;
    for &v in &path {
        increments.push(v - prev);
        prev = v;
    }
    let dt = 1.0 / l as f64;
    let base = path[burn - 1];
    let x: Vec<f64> = path[burn..].iter().map(|&v| v - base).collect();
    let ys = lambdas
        .iter()
        .map(|&lambda| fou_recursion(&increments, lambda, sigma, dt)[burn..].to_vec())
        .collect();
    Ok((x, ys))
}

/// Trajectory-pair sampler for the series models; errors on scalar names.
pub fn generate_series(spec: &AlternativeSpec) -> Result<PairedSample> {
    if !spec.name.is_series() {
        return Err(Error::InvalidParam {
            name: "name".into(),
            reason: format!("{} is not a series model", spec.name.as_str()),
        });
    }
    check_n(spec.n)?;
    let mut rng = rng_for(spec.seed, streams::GENERATE, 0);
    let normal = rand_distr::StandardNormal;
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(spec.n);
    let mut ys: Vec<Vec<f64>> = Vec::with_capacity(spec.n);

    match spec.name {
        AlternativeName::Ar1 => {
            let p = resolve_params(
                spec,
                &[("phi", 0.9), ("link", 1.0), ("len", 100.0)],
            )?;
            let l = param_usize(&p, "len")?;
            let phi = p["phi"];
            if phi.abs() >= 1.0 {
                return Err(Error::InvalidParam {
                    name: "phi".into(),
                    reason: format!("|phi| must be < 1 for stationarity, got {phi}"),
                });
            }
            let link = check_link(p["link"])?;
            let stat_sd = (1.0 / (1.0 - phi * phi)).sqrt();
            for _ in 0..spec.n {
                let mut x = Vec::with_capacity(l);
                let mut level = stat_sd * rng.sample::<f64, _>(normal);
                x.push(level);
                for _ in 1..l {
                    level = phi * level + rng.sample::<f64, _>(normal);
                    x.push(level);
                }
                let y = apply_link(&mut rng, link, &x, l);
                xs.push(x);
                ys.push(y);
            }
        }
        AlternativeName::Arma21 => {
            let p = resolve_params(
                spec,
                &[("phi1", 0.2), ("phi2", 0.5), ("theta", 0.2), ("link", 1.0), ("len", 100.0)],
            )?;
            let l = param_usize(&p, "len")?;
            let (phi1, phi2, theta) = (p["phi1"], p["phi2"], p["theta"]);
            if phi2.abs() >= 1.0 || phi1 + phi2 >= 1.0 || phi2 - phi1 >= 1.0 {
                return Err(Error::InvalidParam {
                    name: "phi".into(),
                    reason: "AR coefficients outside the stationarity region".into(),
                });
            }
            let link = check_link(p["link"])?;
            const BURN: usize = 500;
            for _ in 0..spec.n {
                let mut x = Vec::with_capacity(l);
                let (mut x1, mut x2, mut e1) = (0.0, 0.0, 0.0);
                for k in 0..BURN + l {
                    let e: f64 = rng.sample(normal);
                    let v = phi1 * x1 + phi2 * x2 + e + theta * e1;
                    x2 = x1;
                    x1 = v;
                    e1 = e;
                    if k >= BURN {
                        x.push(v);
                    }
                }
                let y = apply_link(&mut rng, link, &x, l);
                xs.push(x);
                ys.push(y);
            }
        }
        AlternativeName::Bm => {
            let p = resolve_params(spec, &[("link", 1.0), ("len", 100.0)])?;
            let l = param_usize(&p, "len")?;
            let link = check_link(p["link"])?;
            for _ in 0..spec.n {
                let x = brownian(&mut rng, l);
                let y = apply_link(&mut rng, link, &x, l);
                xs.push(x);
                ys.push(y);
            }
        }
        AlternativeName::Fbm => {
            let p = resolve_params(spec, &[("h", 0.7), ("link", 1.0), ("len", 100.0)])?;
            let l = param_usize(&p, "len")?;
            let h = check_unit_interval("h", p["h"])?;
            let link = check_link(p["link"])?;
            let factor = fbm_factor(h, l, l)?;
            for _ in 0..spec.n {
                let x = fbm_path(&mut rng, &factor);
                let y = apply_link(&mut rng, link, &x, l);
                xs.push(x);
                ys.push(y);
            }
        }
        AlternativeName::Fou => {
            let p = resolve_params(
                spec,
                &[("h", 0.7), ("lambda", 0.3), ("sigma", 1.0), ("len", 100.0)],
            )?;
            let l = param_usize(&p, "len")?;
            let h = check_unit_interval("h", p["h"])?;
            let lambda = check_positive("lambda", p["lambda"])?;
            let sigma = check_positive("sigma", p["sigma"])?;
            for _ in 0..spec.n {
                let (x, mut y) = fou_core(&mut rng, h, &[lambda], sigma, l)?;
                xs.push(x);
                ys.push(y.pop().unwrap());
            }
        }
        AlternativeName::Fou2 => {
            let p = resolve_params(
                spec,
                &[
                    ("h", 0.7),
                    ("lambda1", 0.3),
                    ("lambda2", 0.8),
                    ("sigma", 1.0),
                    ("len", 100.0),
                ],
            )?;
            let l = param_usize(&p, "len")?;
            let h = check_unit_interval("h", p["h"])?;
            let l1 = check_positive("lambda1", p["lambda1"])?;
            let l2 = check_positive("lambda2", p["lambda2"])?;
            if l1 == l2 {
                return Err(Error::InvalidParam {
                    name: "lambda2".into(),
                    reason: "lambda1 and lambda2 must differ".into(),
                });
            }
            let sigma = check_positive("sigma", p["sigma"])?;
            let (c1, c2) = (l1 / (l1 - l2), l2 / (l2 - l1));
            for _ in 0..spec.n {
                let (x, ys2) = fou_core(&mut rng, h, &[l1, l2], sigma, l)?;
                let y = ys2[0].iter().zip(&ys2[1]).map(|(&a, &b)| c1 * a + c2 * b).collect();
                xs.push(x);
                ys.push(y);
            }
        }
        _ => unreachable!("gated above"),
    }
    PairedSample::new(xs, ys, Metric::Euclidean, Metric::Euclidean)
}

/// 1-based ranks with ties replaced by the average rank of their run.
pub(crate) fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // Average of the 1-based ranks start+1 ..= end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Rank-based re-expression on the standard normal scale: value with
/// (average, 1-based) rank R among n maps to Φ⁻¹(R/(n+1)).
pub fn normal_scores(xs: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::TooFewObservations { min: 2, got: n });
    }
    for (i, v) in xs.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
    }
    let ranks = average_ranks(xs);
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(ranks.iter().map(|&r| std_normal.inverse_cdf(r / (n as f64 + 1.0))).collect())
}

/// Per-coordinate normal scores over a point set.
pub fn normal_scores_points(points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if points.is_empty() {
        return Err(Error::TooFewObservations { min: 2, got: 0 });
    }
    let dim = points[0].len();
    let n = points.len();
    let mut out = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let column: Vec<f64> = points.iter().map(|p| p[d]).collect();
        let transformed = normal_scores(&column)?;
        for (row, v) in out.iter_mut().zip(&transformed) {
            row[d] = *v;
        }
    }
    Ok(out)
}

/// Both marginals of a sample re-expressed by normal scores, coordinatewise.
pub fn normal_scores_sample(sample: &PairedSample) -> Result<PairedSample> {
    PairedSample::new(
        normal_scores_points(&sample.xs)?,
        normal_scores_points(&sample.ys)?,
        sample.metric_x,
        sample.metric_y,
    )
}
