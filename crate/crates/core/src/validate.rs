use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::diagonal_sigma_max;
use crate::data::{distance_matrix, pair_arrays, DistanceMatrix, Metric};
use crate::error::{Error, Result};
use crate::permutation::{permutation_pvalue, Estimator};
use crate::power::independent_normal_sample;
use crate::recurrence::{en, en_prime, hn_check};
use crate::statistic::{tn_bruteforce, tn_fast, tn_quadrature, tn_reference, StatKind};
use crate::weights::{fit_data_driven, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Oracles,
    Envelope,
    Sigma2,
    Size,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Oracles, Suite::Envelope, Suite::Sigma2, Suite::Size];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Oracles => "oracles",
            Suite::Envelope => "envelope",
            Suite::Sigma2 => "sigma2",
            Suite::Size => "size",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracles" => Ok(Suite::Oracles),
            "envelope" => Ok(Suite::Envelope),
            "sigma2" => Ok(Suite::Sigma2),
            "size" => Ok(Suite::Size),
            _ => Err(Error::InvalidParam {
                name: "suite".into(),
                reason: format!("unknown suite {s:?} (oracles|envelope|sigma2|size)"),
            }),
        }
    }
}

/// One check outcome with the quantity actually measured, so failures are
/// diagnosable from the report alone.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub suite: Suite,
    pub check: String,
    pub passed: bool,
    pub measured: f64,
    pub requirement: String,
}

impl CheckReport {
    fn new(suite: Suite, check: &str, passed: bool, measured: f64, requirement: &str) -> Self {
        Self {
            suite,
            check: check.into(),
            passed,
            measured,
            requirement: requirement.into(),
        }
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<CheckReport>> {
    match suite {
        Suite::Oracles => oracles_suite(),
        Suite::Envelope => envelope_suite(),
        Suite::Sigma2 => sigma2_suite(),
        Suite::Size => size_suite(),
    }
}

/// Random sample in the shape the statistic consumes. Every third draw is
/// tie-heavy (three-point support) to exercise the order-statistic paths.
fn random_matrices(
    rng: &mut ChaCha8Rng,
    n: usize,
    dim: usize,
    ties: bool,
) -> (DistanceMatrix, DistanceMatrix) {
    let draw = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        if ties {
                            *[0.0, 0.5, 1.0].choose(rng).expect("nonempty")
                        } else {
                            rng.sample(rand_distr::StandardNormal)
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let metric = if dim == 1 { Metric::Absolute } else { Metric::Euclidean };
    let dx = distance_matrix(&draw(rng), metric).expect("valid points");
    let dy = distance_matrix(&draw(rng), metric).expect("valid points");
    (dx, dy)
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn oracles_suite() -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let mut worst_fast = 0.0f64;
    let mut worst_brute = 0.0f64;
    for trial in 0..25 {
        let n = 4 + trial % 7;
        let dim = if trial % 2 == 0 { 1 } else { 5 };
        let ties = trial % 3 == 0 && dim == 1;
        let (dx, dy) = random_matrices(&mut rng, n, dim, ties);
        let pairs = pair_arrays(&dx, &dy)?;
        let w = if trial % 2 == 0 {
            WeightSpec::fixed(1.0, 1.0, 1.0, 1.0)?
        } else {
            fit_data_driven(&pairs)?
        };
        let reference = tn_reference(&pairs, &w)?.t;
        worst_fast = worst_fast.max(rel_diff(tn_fast(&pairs, &w)?.t, reference));
        worst_brute = worst_brute.max(rel_diff(tn_bruteforce(&pairs, &w)?.t, reference));
    }
    let mut worst_quad = 0.0f64;
    for trial in 0..5 {
        let (dx, dy) = random_matrices(&mut rng, 6, 1, trial % 3 == 0);
        let pairs = pair_arrays(&dx, &dy)?;
        let w = fit_data_driven(&pairs)?;
        let reference = tn_reference(&pairs, &w)?.t;
        worst_quad = worst_quad.max(rel_diff(tn_quadrature(&pairs, &w, 400)?, reference));
    }
    Ok(vec![
        CheckReport::new(
            Suite::Oracles,
            "fast_vs_reference",
            worst_fast <= 1e-9,
            worst_fast,
            "max relative difference ≤ 1e-9 over 25 samples",
        ),
        CheckReport::new(
            Suite::Oracles,
            "reference_vs_bruteforce",
            worst_brute <= 1e-10,
            worst_brute,
            "max relative difference ≤ 1e-10 over 25 samples",
        ),
        CheckReport::new(
            Suite::Oracles,
            "quadrature_vs_reference",
            worst_quad <= 1e-3,
            worst_quad,
            "max relative difference ≤ 1e-3 at resolution 400",
        ),
    ])
}

/// Checks the claimed one-sided envelope for E′−E literally, plus the two
/// facts that do hold: the difference identity and the magnitude bound
/// |hn| ≤ (4n−6)/(√n·(n−1)). The envelope check reports honest violation
/// counts; sign flips of hn are expected, not a defect in the statistic.
fn envelope_suite() -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let trials = 200;
    let mut violations = 0usize;
    let mut worst_identity = 0.0f64;
    let mut worst_magnitude_ratio = 0.0f64;
    for trial in 0..trials {
        let n = 4 + trial % 5;
        let (dx, dy) = random_matrices(&mut rng, n, 1, trial % 3 == 0);
        let pairs = pair_arrays(&dx, &dy)?;
        let r = rng.gen_range(0.01..2.5);
        let s = rng.gen_range(0.01..2.5);
        let (hn, ok) = hn_check(&dx, &dy, r, s)?;
        violations += usize::from(!ok);
        let direct = en_prime(&dx, &dy, r, s)? - en(&pairs, r, s);
        worst_identity = worst_identity.max((hn - direct).abs());
        let nf = n as f64;
        let magnitude_bound = (4.0 * nf - 6.0) / (nf.sqrt() * (nf - 1.0));
        worst_magnitude_ratio = worst_magnitude_ratio.max(hn.abs() / magnitude_bound);
    }
    Ok(vec![
        CheckReport::new(
            Suite::Envelope,
            "one_sided_envelope",
            violations == 0,
            violations as f64,
            "0 violations of 0 ≤ E′−E ≤ 4/√n (within 1e-12) over 200 samples",
        ),
        CheckReport::new(
            Suite::Envelope,
            "difference_identity",
            worst_identity <= 1e-12,
            worst_identity,
            "hn equals E′−E recomputed from its parts within 1e-12",
        ),
        CheckReport::new(
            Suite::Envelope,
            "magnitude_bound",
            worst_magnitude_ratio <= 1.0 + 1e-9,
            worst_magnitude_ratio,
            "|E′−E| ≤ (4n−6)/(√n(n−1)), ratio ≤ 1",
        ),
    ])
}

fn sigma2_suite() -> Result<Vec<CheckReport>> {
    let (argmax, max) = diagonal_sigma_max();
    Ok(vec![
        CheckReport::new(
            Suite::Sigma2,
            "diagonal_max_value",
            (max - 0.06409).abs() <= 1e-3,
            max,
            "diagonal maximum 0.06409 within 1e-3",
        ),
        CheckReport::new(
            Suite::Sigma2,
            "diagonal_max_location",
            (argmax - 1.3488).abs() <= 1e-2,
            argmax,
            "argmax 1.3488 within 1e-2",
        ),
    ])
}

fn size_suite() -> Result<Vec<CheckReport>> {
    let reps = 500;
    let rejections = (0..reps as u64)
        .into_par_iter()
        .map(|rep| -> Result<usize> {
            let sample = independent_normal_sample(30, 0x5157_0000 + rep)?;
            let (dx, dy) = sample.distance_matrices()?;
            let pairs = pair_arrays(&dx, &dy)?;
            let w = fit_data_driven(&pairs)?;
            let result =
                permutation_pvalue(&dx, &dy, &w, StatKind::Cvm, 199, rep, Estimator::Basic)?;
            Ok(usize::from(result.p_value < 0.05))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let rate = rejections as f64 / reps as f64;
    Ok(vec![CheckReport::new(
        Suite::Size,
        "permutation_size",
        (0.03..=0.07).contains(&rate),
        rate,
        "rejection rate within [0.03, 0.07] at 500 null samples, m=199",
    )])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_suite_passes() {
        let reports = run_suite(Suite::Oracles).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(r.passed, "{}: measured {}", r.check, r.measured);
        }
    }

    /// The one-sided envelope is knowingly violated by real samples; the
    /// suite must say so rather than hide it, while the two honest bounds
    /// hold.
    #[test]
    fn envelope_suite_reports_violations_honestly() {
        let reports = run_suite(Suite::Envelope).unwrap();
        let envelope = &reports[0];
        assert_eq!(envelope.check, "one_sided_envelope");
        assert!(!envelope.passed);
        assert!(envelope.measured > 0.0);
        assert!(reports[1].passed, "identity failed: {}", reports[1].measured);
        assert!(reports[2].passed, "magnitude failed: {}", reports[2].measured);
    }

    #[test]
    fn sigma2_suite_passes() {
        for r in run_suite(Suite::Sigma2).unwrap() {
            assert!(r.passed, "{}: measured {}", r.check, r.measured);
        }
    }

    #[test]
    fn size_suite_passes() {
        for r in run_suite(Suite::Size).unwrap() {
            assert!(r.passed, "{}: measured {}", r.check, r.measured);
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            let back: Suite = s.as_str().parse().unwrap();
            assert_eq!(back, s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn reports_serialize_for_machine_consumption() {
        let r = CheckReport::new(Suite::Sigma2, "x", true, 0.5, "y");
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"sigma2\""));
        assert!(json.contains("\"passed\":true"));
    }
}
