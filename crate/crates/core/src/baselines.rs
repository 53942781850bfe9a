use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::data::{DistanceMatrix, PairedSample};
use crate::error::{Error, Result};
use crate::generators::average_ranks;
use crate::seed::{rng_for, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineTest {
    Dcov,
    PskMax,
    Hsic,
}

impl std::fmt::Display for BaselineTest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BaselineTest::Dcov => "dcov",
            BaselineTest::PskMax => "psk_max",
            BaselineTest::Hsic => "hsic",
        };
        f.write_str(s)
    }
}

/// Outcome of one comparison test. `m` is 0 when the calibration is
/// analytic rather than resampled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineResult {
    pub test: BaselineTest,
    pub statistic: f64,
    pub p_value: f64,
    pub m: usize,
    pub seed: u64,
}

fn check_small(n: usize) -> Result<()> {
    if n < 4 {
        return Err(Error::TooFewObservations { min: 4, got: n });
    }
    Ok(())
}

fn check_m(m: usize) -> Result<()> {
    if m < 19 {
        return Err(Error::InvalidParam {
            name: "m".into(),
            reason: format!("need at least 19 permutations, got {m}"),
        });
    }
    Ok(())
}

/// Row-major double centering: A_ij = d_ij − row_i − col_j + grand.
fn double_center(d: &DistanceMatrix) -> Vec<f64> {
    let n = d.n();
    let mut row = vec![0.0; n];
    for i in 0..n {
        row[i] = (0..n).map(|j| d.get(i, j)).sum::<f64>() / n as f64;
    }
    let grand = row.iter().sum::<f64>() / n as f64;
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = d.get(i, j) - row[i] - row[j] + grand;
        }
    }
    a
}

/// (1/n²)·Σ_ij a_ij·b_{σ(i)σ(j)}. Centering commutes with relabeling both
/// sides by σ, so permuting the second matrix this way reproduces the
/// statistic of the permuted sample.
fn product_mean(a: &[f64], b: &[f64], n: usize, sigma: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let (ra, rb) = (i * n, sigma[i] * n);
        for j in 0..n {
            total += a[ra + j] * b[rb + sigma[j]];
        }
    }
    total / (n * n) as f64
}

/// Permutation p-value for any product-mean statistic on centered matrices,
/// with the add-one estimator (1+count)/(1+m).
fn product_permutation_pvalue(
    a: &[f64],
    b: &[f64],
    n: usize,
    observed: f64,
    m: usize,
    seed: u64,
) -> f64 {
    let count: usize = (0..m as u64)
        .into_par_iter()
        .map_init(
            || (0..n).collect::<Vec<usize>>(),
            |sigma, i| {
                // Reset before shuffling: the scratch carries the previous
                // iteration's state and the draw must not depend on it.
                for (k, v) in sigma.iter_mut().enumerate() {
                    *v = k;
                }
                let mut rng = rng_for(seed, streams::BASELINE, i);
                sigma.shuffle(&mut rng);
                usize::from(product_mean(a, b, n, sigma) >= observed)
            },
        )
        .sum();
    (1 + count) as f64 / (1 + m) as f64
}

fn identity(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Squared empirical distance covariance V²_n.
pub fn dcov_statistic(sample: &PairedSample) -> Result<f64> {
    let (dx, dy) = sample.distance_matrices()?;
    let n = dx.n();
    check_small(n)?;
    let (a, b) = (double_center(&dx), double_center(&dy));
    Ok(product_mean(&a, &b, n, &identity(n)))
}

/// Empirical distance correlation, zero when either marginal variance is.
pub fn distance_correlation(sample: &PairedSample) -> Result<f64> {
    let (dx, dy) = sample.distance_matrices()?;
    let n = dx.n();
    check_small(n)?;
    let (a, b) = (double_center(&dx), double_center(&dy));
    let id = identity(n);
    let vxy = product_mean(&a, &b, n, &id);
    let vx = product_mean(&a, &a, n, &id);
    let vy = product_mean(&b, &b, n, &id);
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(0.0);
    }
    Ok((vxy / (vx * vy).sqrt()).max(0.0).sqrt())
}

/// Distance-covariance test with permutation calibration.
pub fn dcov_test(sample: &PairedSample, m: usize, seed: u64) -> Result<BaselineResult> {
    check_m(m)?;
    let (dx, dy) = sample.distance_matrices()?;
    let n = dx.n();
    check_small(n)?;
    let (a, b) = (double_center(&dx), double_center(&dy));
    let observed = product_mean(&a, &b, n, &identity(n));
    let p_value = product_permutation_pvalue(&a, &b, n, observed, m, seed);
    Ok(BaselineResult { test: BaselineTest::Dcov, statistic: observed, p_value, m, seed })
}

/// Classical two-sided p-values of the three correlation tests.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorrelationPValues {
    pub pearson: f64,
    pub spearman: f64,
    pub kendall: f64,
}

impl CorrelationPValues {
    pub fn min(&self) -> f64 {
        self.pearson.min(self.spearman).min(self.kendall)
    }
}

fn scalar_columns(sample: &PairedSample) -> Result<(Vec<f64>, Vec<f64>)> {
    if sample.xs[0].len() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: sample.xs[0].len() });
    }
    if sample.ys[0].len() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: sample.ys[0].len() });
    }
    Ok((
        sample.xs.iter().map(|p| p[0]).collect(),
        sample.ys.iter().map(|p| p[0]).collect(),
    ))
}

fn pearson_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Two-sided p from the t transform of a correlation on n points (df n−2).
fn correlation_pvalue(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let r2 = (r * r).min(1.0);
    if 1.0 - r2 <= 0.0 {
        return 0.0;
    }
    let t = r.abs() * (df / (1.0 - r2)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
}

/// Permutations of 1..=n with k inversions, for the exact Kendall null.
fn inversion_counts(n: usize) -> Vec<u64> {
    let mut counts = vec![1u64];
    for size in 2..=n {
        let cap = size * (size - 1) / 2;
        let mut next = vec![0u64; cap + 1];
        let mut window = 0u64;
        for k in 0..=cap {
            window += if k < counts.len() { counts[k] } else { 0 };
            if k >= size {
                window -= counts[k - size];
            }
            next[k] = window;
        }
        counts = next;
    }
    counts
}

const KENDALL_EXACT_MAX_N: usize = 12;

fn kendall_pvalue(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0i64;
    let (mut ties_x, mut ties_y) = (false, false);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = (x[j] - x[i]).signum();
            let dy = (y[j] - y[i]).signum();
            ties_x |= dx == 0.0;
            ties_y |= dy == 0.0;
            s += (dx * dy) as i64;
        }
    }
    if !ties_x && !ties_y && n <= KENDALL_EXACT_MAX_N {
        // Exact null: S = M − 2·inversions, M = n(n−1)/2.
        let counts = inversion_counts(n);
        let m_pairs = (n * (n - 1) / 2) as i64;
        let total: u64 = counts.iter().sum();
        let tail: u64 = counts
            .iter()
            .enumerate()
            .filter(|&(k, _)| (m_pairs - 2 * k as i64).abs() >= s.abs())
            .map(|(_, &c)| c)
            .sum();
        return tail as f64 / total as f64;
    }
    // Tie-corrected normal approximation for the variance of S.
    let nf = n as f64;
    let run_sums = |v: &[f64]| {
        let mut sorted = v.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let (mut t1, mut t2, mut t3) = (0.0, 0.0, 0.0);
        let mut start = 0;
        while start < sorted.len() {
            let mut end = start + 1;
            while end < sorted.len() && sorted[end] == sorted[start] {
                end += 1;
            }
            let t = (end - start) as f64;
            t1 += t * (t - 1.0) * (2.0 * t + 5.0);
            t2 += t * (t - 1.0);
            t3 += t * (t - 1.0) * (t - 2.0);
            start = end;
        }
        (t1, t2, t3)
    };
    let (x1, x2, x3) = run_sums(x);
    let (y1, y2, y3) = run_sums(y);
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - x1 - y1) / 18.0
        + x2 * y2 / (2.0 * nf * (nf - 1.0))
        + x3 * y3 / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    if var <= 0.0 {
        return 1.0;
    }
    let z = s as f64 / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z.abs()))).clamp(0.0, 1.0)
}

/// The three classical correlation tests on scalar pairs. The power-table
/// column takes the best power among them per alternative; single runs
/// summarize with the smallest p-value.
pub fn psk_pvalues(sample: &PairedSample) -> Result<CorrelationPValues> {
    let (x, y) = scalar_columns(sample)?;
    check_small(x.len())?;
    let pearson = correlation_pvalue(pearson_r(&x, &y), x.len());
    let rx = average_ranks(&x);
    let ry = average_ranks(&y);
    let spearman = correlation_pvalue(pearson_r(&rx, &ry), x.len());
    let kendall = kendall_pvalue(&x, &y);
    Ok(CorrelationPValues { pearson, spearman, kendall })
}

pub fn psk_max_test(sample: &PairedSample, _m: usize, seed: u64) -> Result<BaselineResult> {
    let (x, y) = scalar_columns(sample)?;
    check_small(x.len())?;
    let p = psk_pvalues(sample)?;
    Ok(BaselineResult {
        test: BaselineTest::PskMax,
        statistic: pearson_r(&x, &y).abs(),
        p_value: p.min(),
        m: 0,
        seed,
    })
}

/// Median of the off-diagonal distances; the Gaussian bandwidth.
fn median_distance(d: &DistanceMatrix) -> f64 {
    let n = d.n();
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            v.push(d.get(i, j));
        }
    }
    v.sort_unstable_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn gaussian_gram(d: &DistanceMatrix, side: &'static str) -> Result<Vec<f64>> {
    let n = d.n();
    let bw = median_distance(d);
    if bw <= 0.0 {
        return Err(Error::DegenerateDistances { side });
    }
    let denom = 2.0 * bw * bw;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = d.get(i, j);
            k[i * n + j] = (-v * v / denom).exp();
        }
    }
    Ok(k)
}

/// K ↦ HKH with H = I − 11ᵀ/n, row-major in place.
fn center_gram(k: &mut [f64], n: usize) {
    let mut row = vec![0.0; n];
    for i in 0..n {
        row[i] = k[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64;
    }
    let grand = row.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] += grand - row[i] - row[j];
        }
    }
}

fn hsic_grams(sample: &PairedSample) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let (dx, dy) = sample.distance_matrices()?;
    let n = dx.n();
    check_small(n)?;
    let mut k = gaussian_gram(&dx, "x")?;
    let mut l = gaussian_gram(&dy, "y")?;
    center_gram(&mut k, n);
    center_gram(&mut l, n);
    Ok((k, l, n))
}

/// Biased HSIC estimate tr(KHLH)/n² with median-distance bandwidths.
pub fn hsic_statistic(sample: &PairedSample) -> Result<f64> {
    let (k, l, n) = hsic_grams(sample)?;
    Ok(product_mean(&k, &l, n, &identity(n)))
}

/// HSIC test with permutation calibration. Bandwidths are fitted on the
/// observed sample once and held fixed across permutations.
pub fn hsic_test(sample: &PairedSample, m: usize, seed: u64) -> Result<BaselineResult> {
    check_m(m)?;
    let (k, l, n) = hsic_grams(sample)?;
    let observed = product_mean(&k, &l, n, &identity(n));
    let p_value = product_permutation_pvalue(&k, &l, n, observed, m, seed);
    Ok(BaselineResult { test: BaselineTest::Hsic, statistic: observed, p_value, m, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Metric;
    use crate::generators::{generate, AlternativeName, AlternativeSpec};
    use rand_chacha::ChaCha8Rng;

    fn scalar_sample(x: Vec<f64>, y: Vec<f64>) -> PairedSample {
        PairedSample::new(
            x.into_iter().map(|v| vec![v]).collect(),
            y.into_iter().map(|v| vec![v]).collect(),
            Metric::Absolute,
            Metric::Absolute,
        )
        .unwrap()
    }

    fn random_scalars(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let y = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        (x, y)
    }

    #[test]
    fn dcor_is_one_on_identical_marginals() {
        let (x, _) = random_scalars(25, 1);
        let s = scalar_sample(x.clone(), x);
        let dcor = distance_correlation(&s).unwrap();
        assert!((dcor - 1.0).abs() < 1e-12, "dcor = {dcor}");
    }

    #[test]
    fn dcov_rejects_perfect_dependence() {
        let (x, _) = random_scalars(30, 2);
        let s = scalar_sample(x.clone(), x);
        let r = dcov_test(&s, 199, 7).unwrap();
        assert!(r.p_value <= 0.05, "p = {}", r.p_value);
        assert!(r.statistic > 0.0);
    }

    #[test]
    fn dcov_invariant_under_rotation_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let ys: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let plain = PairedSample::new(xs.clone(), ys.clone(), Metric::Euclidean, Metric::Euclidean)
            .unwrap();
        let (sin, cos) = 0.7f64.sin_cos();
        let moved: Vec<Vec<f64>> = xs
            .iter()
            .map(|p| vec![cos * p[0] - sin * p[1] + 5.0, sin * p[0] + cos * p[1] - 2.0])
            .collect();
        let rotated =
            PairedSample::new(moved, ys, Metric::Euclidean, Metric::Euclidean).unwrap();
        let a = dcov_statistic(&plain).unwrap();
        let b = dcov_statistic(&rotated).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn dcov_size_is_close_to_nominal() {
        let reps = 500;
        let rejections: usize = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let (x, y) = random_scalars(20, 1000 + rep as u64);
                let s = scalar_sample(x, y);
                usize::from(dcov_test(&s, 199, rep as u64).unwrap().p_value <= 0.05)
            })
            .sum();
        let rate = rejections as f64 / reps as f64;
        assert!((0.03..=0.07).contains(&rate), "size = {rate}");
    }

    #[test]
    fn psk_rejects_linear_dependence() {
        let (x, _) = random_scalars(30, 4);
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v + 1.0).collect();
        let p = psk_pvalues(&scalar_sample(x, y)).unwrap();
        assert!(p.pearson < 1e-3);
        assert!(p.spearman < 1e-3);
        assert!(p.kendall < 1e-3);
    }

    #[test]
    fn perfect_anticorrelation_pins_pearson_to_zero() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let y = vec![5.0, 4.0, 3.0, 2.0, 1.0];
        let p = psk_pvalues(&scalar_sample(x, y)).unwrap();
        assert_eq!(p.pearson, 0.0);
        assert_eq!(p.spearman, 0.0);
    }

    /// n = 3 by hand: S ∈ {±3, ±1} with weights 1,2,2,1 over the 6
    /// permutations, so |S| ≥ 3 has probability 1/3.
    #[test]
    fn kendall_exact_small_case() {
        let s = scalar_sample(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]);
        let p4 = psk_pvalues(&s).unwrap().kendall;
        assert!((p4 - 2.0 / 24.0).abs() < 1e-12, "n=4 fully concordant: {p4}");
        let counts = inversion_counts(3);
        assert_eq!(counts, vec![1, 2, 2, 1]);
        let total: u64 = inversion_counts(12).iter().sum();
        assert_eq!(total, 479_001_600);
    }

    #[test]
    fn kendall_exact_agrees_with_normal_axis() {
        // At n = 12 the exact tail and the normal approximation should be
        // within a few percent for mid-range statistics.
        let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let y = vec![2.0, 0.0, 3.0, 1.0, 5.0, 4.0, 7.0, 6.0, 9.0, 11.0, 8.0, 10.0];
        let exact = kendall_pvalue(&x, &y);
        let shifted: Vec<f64> = x.iter().chain(&[12.0]).cloned().collect();
        let y13 = [&y[..], &[12.0]].concat();
        let approx = kendall_pvalue(&shifted, &y13);
        assert!(exact > 0.0 && exact < 0.1);
        assert!(approx > 0.0 && approx < 0.1);
    }

    #[test]
    fn kendall_handles_ties_via_approximation() {
        let x = vec![1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let y = vec![1.0, 2.0, 2.0, 3.0, 5.0, 4.0, 7.0, 8.0];
        let p = kendall_pvalue(&x, &y);
        assert!(p > 0.0 && p < 0.05, "p = {p}");
    }

    #[test]
    fn psk_circle_stays_near_size() {
        let reps = 500;
        let rejections: usize = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let spec = AlternativeSpec::new(AlternativeName::Circle, 50, 5000 + rep as u64);
                let s = generate(&spec).unwrap();
                usize::from(psk_pvalues(&s).unwrap().min() <= 0.05)
            })
            .sum();
        // Best-of-three without adjustment still sits at or below nominal
        // here because the circle defeats all three monotone statistics.
        let rate = rejections as f64 / reps as f64;
        assert!(rate <= 0.05, "circle psk power = {rate}");
    }

    #[test]
    fn psk_four_clouds_matches_reported_power() {
        let reps = 500;
        let mut powers = [0usize; 3];
        for rep in 0..reps {
            let spec = AlternativeSpec::new(AlternativeName::FourClouds, 30, 9000 + rep as u64);
            let p = psk_pvalues(&generate(&spec).unwrap()).unwrap();
            powers[0] += usize::from(p.pearson <= 0.05);
            powers[1] += usize::from(p.spearman <= 0.05);
            powers[2] += usize::from(p.kendall <= 0.05);
        }
        let max_power = powers.iter().map(|&c| c as f64 / reps as f64).fold(0.0, f64::max);
        assert!((max_power - 0.046).abs() < 0.03, "four clouds psk = {max_power}");
    }

    #[test]
    fn psk_requires_scalars() {
        let spec = AlternativeSpec::new(AlternativeName::Epsilon, 20, 1);
        let s = generate(&spec).unwrap();
        assert!(psk_pvalues(&s).is_err());
        assert!(psk_max_test(&s, 0, 1).is_err());
    }

    #[test]
    fn hsic_rejects_perfect_dependence() {
        let (x, _) = random_scalars(30, 6);
        let s = scalar_sample(x.clone(), x);
        let r = hsic_test(&s, 199, 11).unwrap();
        assert!(r.p_value < 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn hsic_size_is_close_to_nominal() {
        let reps = 500;
        let rejections: usize = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let (x, y) = random_scalars(20, 3000 + rep as u64);
                let s = scalar_sample(x, y);
                usize::from(hsic_test(&s, 199, rep as u64).unwrap().p_value <= 0.05)
            })
            .sum();
        let rate = rejections as f64 / reps as f64;
        assert!((0.03..=0.07).contains(&rate), "size = {rate}");
    }

    #[test]
    fn hsic_degenerate_marginal_is_an_error() {
        let s = scalar_sample(vec![1.0; 10], (0..10).map(|i| i as f64).collect());
        assert!(matches!(
            hsic_statistic(&s),
            Err(Error::DegenerateDistances { side: "x" })
        ));
    }

    #[test]
    fn result_serializes_with_snake_case_test_names() {
        let r = BaselineResult {
            test: BaselineTest::PskMax,
            statistic: 0.5,
            p_value: 0.2,
            m: 0,
            seed: 9,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"psk_max\""));
        let back: BaselineResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back.test, BaselineTest::PskMax);
    }

    #[test]
    fn permutation_pvalues_are_thread_invariant() {
        let (x, y) = random_scalars(18, 12);
        let s = scalar_sample(x, y);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                (
                    dcov_test(&s, 99, 21).unwrap().p_value,
                    hsic_test(&s, 99, 21).unwrap().p_value,
                )
            })
        };
        assert_eq!(run(1), run(4));
    }
}
