use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{pair_arrays, repair_z_into, DistanceMatrix, PairArrays, PairedSample};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for, streams};
use crate::statistic::{tn_fast, tsup, StatKind, StatValue};
use crate::weights::{WeightChoice, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Basic,
    PlusOne,
}

impl Estimator {
    /// count = #{permutation statistics ≥ observed}.
    pub fn pvalue(self, count: usize, m: usize) -> f64 {
        match self {
            Estimator::Basic => count as f64 / m as f64,
            Estimator::PlusOne => (1 + count) as f64 / (1 + m) as f64,
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Basic => "basic",
            Estimator::PlusOne => "plus_one",
        })
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Estimator::Basic),
            "plus_one" => Ok(Estimator::PlusOne),
            other => Err(Error::InvalidParam {
                name: "estimator".into(),
                reason: format!("unknown estimator {other:?}, expected basic or plus_one"),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: StatValue,
    pub p_value: f64,
    pub m: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub weight: WeightSpec,
    /// Seconds; populated only when the caller times the run, so identical
    /// seeds produce byte-identical serializations by default.
    pub elapsed: Option<f64>,
}

fn eval(pairs: &PairArrays, w: &WeightSpec, kind: StatKind) -> Result<StatValue> {
    match kind {
        StatKind::Cvm => tn_fast(pairs, w),
        StatKind::Sup => tsup(pairs),
    }
}

/// The m permutation-null statistic values, in replicate order. Replicate i
/// draws its permutation from a counter-derived seed, so the vector does not
/// depend on the worker count.
pub fn permutation_null_sample(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    w: &WeightSpec,
    kind: StatKind,
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let base = pair_arrays(dx, dy)?;
    (0..m as u64)
        .into_par_iter()
        .map_init(
            || base.clone(),
            |scratch, i| {
                let mut rng = rng_for(seed, streams::PERMUTE, i);
                let mut sigma: Vec<usize> = (0..dx.n()).collect();
                sigma.shuffle(&mut rng);
                repair_z_into(dx, &sigma, scratch);
                Ok(eval(scratch, w, kind)?.t)
            },
        )
        .collect()
}

/// Permutation test for the identity pairing against relabelings of the X
/// marginal. Distance matrices are computed once; every replicate rewrites
/// only the Z pair array.
pub fn permutation_pvalue(
    dx: &DistanceMatrix,
    dy: &DistanceMatrix,
    w: &WeightSpec,
    kind: StatKind,
    m: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<TestResult> {
    if m < 19 {
        return Err(Error::InvalidParam {
            name: "m".into(),
            reason: format!("need at least 19 permutations, got {m}"),
        });
    }
    if dx.n() < 4 {
        return Err(Error::TooFewObservations { min: 4, got: dx.n() });
    }
    let pairs = pair_arrays(dx, dy)?;
    let observed = eval(&pairs, w, kind)?;
    let null = permutation_null_sample(dx, dy, w, kind, m, seed)?;
    let count = null.iter().filter(|&&t| t >= observed.t).count();
    Ok(TestResult {
        statistic: observed,
        p_value: estimator.pvalue(count, m),
        m,
        seed,
        estimator,
        weight: w.clone(),
        elapsed: None,
    })
}

/// Sorted-sample q-quantile as the 1-based order statistic ⌈q·m⌉, clamped
/// to [1, m].
pub fn empirical_quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidParam { name: "sample".into(), reason: "empty".into() });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParam {
            name: "q".into(),
            reason: format!("quantile level must be in (0,1), got {q}"),
        });
    }
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[idx - 1])
}

/// Empirical (1−level)-quantile of the statistic over `reps` independent
/// null samples. The sampler receives a counter-derived seed per replicate,
/// so thresholds are reproducible bit-exactly and worker-count independent.
/// Data-driven weights are refitted on each null sample.
pub fn critical_value<F>(
    null_sampler: F,
    n: usize,
    w: &WeightChoice,
    kind: StatKind,
    level: f64,
    reps: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(u64, usize) -> Result<PairedSample> + Sync,
{
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParam {
            name: "level".into(),
            reason: format!("level must be in (0,1), got {level}"),
        });
    }
    if reps < 100 {
        return Err(Error::InvalidParam {
            name: "reps".into(),
            reason: format!("need at least 100 replications, got {reps}"),
        });
    }
    let mut values: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let sample = null_sampler(derive_seed(seed, streams::NULL_CALIBRATION, i), n)?;
            let (dx, dy) = sample.distance_matrices()?;
            let pairs = pair_arrays(&dx, &dy)?;
            let spec = w.resolve(&pairs)?;
            Ok(eval(&pairs, &spec, kind)?.t)
        })
        .collect::<Result<_>>()?;
    values.sort_unstable_by(f64::total_cmp);
    empirical_quantile(&values, 1.0 - level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{distance_matrix, Metric, PairedSample};
    use crate::weights::WeightSpec;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn w11() -> WeightSpec {
        WeightSpec::fixed(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn scalars(vals: &[f64]) -> Vec<Vec<f64>> {
        vals.iter().map(|&v| vec![v]).collect()
    }

    fn normal_sample(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (x, y)
    }

    #[test]
    fn estimator_formulas() {
        assert_eq!(Estimator::Basic.pvalue(0, 19), 0.0);
        assert_eq!(Estimator::PlusOne.pvalue(0, 19), 1.0 / 20.0);
        assert_eq!(Estimator::Basic.pvalue(199, 199), 1.0);
        assert_eq!(Estimator::PlusOne.pvalue(199, 199), 1.0);
        for count in 0..=19 {
            let basic = Estimator::Basic.pvalue(count, 19);
            let plus = Estimator::PlusOne.pvalue(count, 19);
            assert!(plus >= basic);
            assert!(plus > 0.0);
            assert!((basic * 19.0 - count as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_dependence_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let x: Vec<f64> = (0..30).map(|_| rng.sample(StandardNormal)).collect();
        let dx = distance_matrix(&scalars(&x), Metric::Absolute).unwrap();
        let res =
            permutation_pvalue(&dx, &dx, &w11(), StatKind::Cvm, 199, 7, Estimator::Basic).unwrap();
        assert!(res.p_value <= 0.05, "p = {}", res.p_value);
        assert_eq!(res.m, 199);
        assert_eq!(res.seed, 7);
    }

    #[test]
    fn result_serializes_with_exact_field_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let dx = distance_matrix(&scalars(&x), Metric::Absolute).unwrap();
        let dy = distance_matrix(&scalars(&y), Metric::Absolute).unwrap();
        let res =
            permutation_pvalue(&dx, &dy, &w11(), StatKind::Cvm, 19, 1, Estimator::PlusOne).unwrap();
        let json: serde_json::Value = serde_json::to_value(&res).unwrap();
        for key in ["statistic", "p_value", "m", "seed", "estimator", "weight", "elapsed"] {
            assert!(json.get(key).is_some(), "missing field {key}");
        }
        assert!(json["elapsed"].is_null());
        assert_eq!(json["estimator"], "plus_one");
        let back: TestResult = serde_json::from_value(json).unwrap();
        assert_eq!(back.p_value, res.p_value);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (x, y) = normal_sample(5, 20);
        let dx = distance_matrix(&scalars(&x), Metric::Absolute).unwrap();
        let dy = distance_matrix(&scalars(&y), Metric::Absolute).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                permutation_pvalue(&dx, &dy, &w11(), StatKind::Cvm, 99, 42, Estimator::Basic)
                    .unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.p_value.to_bits(), b.p_value.to_bits());
        assert_eq!(a.statistic.t.to_bits(), b.statistic.t.to_bits());
    }

    #[test]
    fn sup_kind_runs() {
        let (x, y) = normal_sample(9, 15);
        let dx = distance_matrix(&scalars(&x), Metric::Absolute).unwrap();
        let dy = distance_matrix(&scalars(&y), Metric::Absolute).unwrap();
        let res =
            permutation_pvalue(&dx, &dy, &w11(), StatKind::Sup, 39, 11, Estimator::Basic).unwrap();
        assert_eq!(res.statistic.kind, StatKind::Sup);
        assert!((0.0..=1.0).contains(&res.p_value));
    }

    #[test]
    fn input_gates() {
        let (x, y) = normal_sample(2, 10);
        let dx = distance_matrix(&scalars(&x), Metric::Absolute).unwrap();
        let dy = distance_matrix(&scalars(&y), Metric::Absolute).unwrap();
        assert!(
            permutation_pvalue(&dx, &dy, &w11(), StatKind::Cvm, 18, 0, Estimator::Basic).is_err()
        );
        let (x3, y3) = normal_sample(2, 3);
        let dx3 = distance_matrix(&scalars(&x3), Metric::Absolute).unwrap();
        let dy3 = distance_matrix(&scalars(&y3), Metric::Absolute).unwrap();
        assert!(
            permutation_pvalue(&dx3, &dy3, &w11(), StatKind::Cvm, 99, 0, Estimator::Basic).is_err()
        );
    }

    /// Pre-permuting the observations cannot change the permutation null
    /// in law; compared by two-sample KS distance on 2000 replicates.
    #[test]
    fn pre_permutation_leaves_null_law_unchanged() {
        let (x, y) = normal_sample(77, 20);
        let dx = distance_matrix(&scalars(&x), Metric::Absolute).unwrap();
        let dy = distance_matrix(&scalars(&y), Metric::Absolute).unwrap();
        let mut order: Vec<usize> = (0..20).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(78));
        let xp: Vec<f64> = order.iter().map(|&i| x[i]).collect();
        let dxp = distance_matrix(&scalars(&xp), Metric::Absolute).unwrap();

        let mut a =
            permutation_null_sample(&dx, &dy, &w11(), StatKind::Cvm, 2000, 500).unwrap();
        let mut b =
            permutation_null_sample(&dxp, &dy, &w11(), StatKind::Cvm, 2000, 501).unwrap();
        a.sort_unstable_by(f64::total_cmp);
        b.sort_unstable_by(f64::total_cmp);
        let ks = ks_distance(&a, &b);
        assert!(ks < 0.1, "KS = {ks}");
    }

    fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
        let mut best = 0.0f64;
        let (mut i, mut j) = (0usize, 0usize);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let d = (i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs();
            best = best.max(d);
        }
        best
    }

    #[test]
    fn quantile_convention() {
        let sorted: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(empirical_quantile(&sorted, 0.5).unwrap(), 5.0);
        assert_eq!(empirical_quantile(&sorted, 0.95).unwrap(), 10.0);
        assert_eq!(empirical_quantile(&sorted, 0.05).unwrap(), 1.0);
        assert!(empirical_quantile(&sorted, 0.0).is_err());
        assert!(empirical_quantile(&[], 0.5).is_err());
    }

    fn normal_pair_sampler(seed: u64, n: usize) -> crate::error::Result<PairedSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.sample(StandardNormal)]).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.sample(StandardNormal)]).collect();
        PairedSample::new(x, y, Metric::Absolute, Metric::Absolute)
    }

    #[test]
    fn critical_value_median_matches_direct_sort() {
        let w = WeightChoice::Fixed { g1: w11().g1, g2: w11().g2 };
        let thr =
            critical_value(normal_pair_sampler, 12, &w, StatKind::Cvm, 0.5, 101, 9).unwrap();
        let mut direct: Vec<f64> = (0..101u64)
            .map(|i| {
                let sample =
                    normal_pair_sampler(derive_seed(9, streams::NULL_CALIBRATION, i), 12).unwrap();
                let (dx, dy) = sample.distance_matrices().unwrap();
                let pairs = pair_arrays(&dx, &dy).unwrap();
                crate::statistic::tn_fast(&pairs, &w11()).unwrap().t
            })
            .collect();
        direct.sort_unstable_by(f64::total_cmp);
        assert_eq!(thr.to_bits(), direct[50].to_bits());
    }

    #[test]
    fn critical_value_reproducible_and_thread_invariant() {
        let w = WeightChoice::Fixed { g1: w11().g1, g2: w11().g2 };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                critical_value(normal_pair_sampler, 10, &w, StatKind::Cvm, 0.05, 200, 4).unwrap()
            })
        };
        assert_eq!(run(1).to_bits(), run(3).to_bits());
    }

    #[test]
    fn critical_value_gates() {
        let w = WeightChoice::Fixed { g1: w11().g1, g2: w11().g2 };
        assert!(critical_value(normal_pair_sampler, 10, &w, StatKind::Cvm, 0.0, 200, 4).is_err());
        assert!(critical_value(normal_pair_sampler, 10, &w, StatKind::Cvm, 1.0, 200, 4).is_err());
        assert!(critical_value(normal_pair_sampler, 10, &w, StatKind::Cvm, 0.05, 99, 4).is_err());
    }

    /// Level check at n=30: independent marginals should be rejected at a
    /// rate close to the nominal 0.05.
    #[test]
    fn size_close_to_nominal() {
        let rejections: usize = (0..500u64)
            .into_par_iter()
            .map(|rep| {
                let (x, y) = normal_sample(derive_seed(1234, 9, rep), 30);
                let dx = distance_matrix(&scalars(&x), Metric::Absolute).unwrap();
                let dy = distance_matrix(&scalars(&y), Metric::Absolute).unwrap();
                let res = permutation_pvalue(
                    &dx,
                    &dy,
                    &w11(),
                    StatKind::Cvm,
                    199,
                    derive_seed(1234, 10, rep),
                    Estimator::Basic,
                )
                .unwrap();
                (res.p_value <= 0.05) as usize
            })
            .sum();
        let rate = rejections as f64 / 500.0;
        assert!((0.03..=0.07).contains(&rate), "size = {rate}");
    }
}
