use std::collections::HashMap;
use std::time::Instant;

use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{dcov_test, hsic_test, psk_pvalues};
use crate::data::{pair_arrays, Metric, PairedSample};
use crate::error::{Error, Result};
use crate::generators::{generate, normal_scores_sample, AlternativeSpec};
use crate::permutation::{critical_value, permutation_pvalue, Estimator};
use crate::seed::{derive_seed, rng_for, streams};
use crate::statistic::{tn_fast, tsup, StatKind};
use crate::weights::WeightChoice;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum TestChoice {
    /// The integral statistic, one table column per weight choice.
    RrCvm { weights: Vec<WeightChoice> },
    RrSup,
    Dcov,
    Psk,
    Hsic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Raw data, per-sample permutation p-values.
    Permutation,
    /// Normal-scores transform plus a precomputed null critical value from
    /// independent copies of each alternative. Comparison tests keep their
    /// own calibrations on the raw data in both modes.
    NullQuantile,
}

fn default_level() -> f64 {
    0.05
}

fn default_perm_m() -> usize {
    199
}

fn default_null_reps() -> usize {
    5000
}

/// One power study: every (alternative, n, test, weight) cell estimated
/// from `power_reps` fresh samples shared across tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStudyConfig {
    pub alternatives: Vec<AlternativeSpec>,
    pub tests: Vec<TestChoice>,
    pub n_values: Vec<usize>,
    #[serde(default = "default_level")]
    pub level: f64,
    pub power_reps: usize,
    #[serde(default = "default_perm_m")]
    pub perm_m: usize,
    #[serde(default = "default_null_reps")]
    pub null_reps: usize,
    pub calibration: Calibration,
    pub master_seed: u64,
}

/// Rough per-study kernel-operation budget above which configs get a
/// warning instead of silently running for hours.
const OPS_WARN_THRESHOLD: f64 = 1e10;

impl PowerStudyConfig {
    /// Structural checks; returns human-readable warnings for legal but
    /// expensive configs.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.alternatives.is_empty() {
            return Err(Error::Config("alternatives: need at least one".into()));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("tests: need at least one".into()));
        }
        if self.n_values.is_empty() {
            return Err(Error::Config("n_values: need at least one".into()));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 4) {
            return Err(Error::Config(format!("n_values: need n ≥ 4, got {n}")));
        }
        if self.power_reps < 1 {
            return Err(Error::Config("power_reps: need at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level: must be in (0,1), got {}", self.level)));
        }
        let needs_perms = self.calibration == Calibration::Permutation
            || self.tests.iter().any(|t| matches!(t, TestChoice::Dcov | TestChoice::Hsic));
        if needs_perms && self.perm_m < 19 {
            return Err(Error::Config(format!("perm_m: need at least 19, got {}", self.perm_m)));
        }
        if self.calibration == Calibration::NullQuantile && self.null_reps < 100 {
            return Err(Error::Config(format!(
                "null_reps: need at least 100, got {}",
                self.null_reps
            )));
        }
        for t in &self.tests {
            if let TestChoice::RrCvm { weights } = t {
                if weights.is_empty() {
                    return Err(Error::Config("rr_cvm: need at least one weight".into()));
                }
            }
        }
        let mut warnings = Vec::new();
        let ops = self.estimated_ops();
        if ops > OPS_WARN_THRESHOLD {
            warnings.push(format!(
                "estimated kernel operations ≈ {ops:.2e} exceed {OPS_WARN_THRESHOLD:.0e}; \
                 expect a long run"
            ));
        }
        Ok(warnings)
    }

    /// Order-of-magnitude operation count: reps × m × N·log₂N for the
    /// permutation-calibrated statistic, plus baseline and null-table costs.
    pub fn estimated_ops(&self) -> f64 {
        let reps = self.power_reps as f64;
        let m = self.perm_m as f64;
        let mut total = 0.0;
        for &n in &self.n_values {
            let nn = (n * (n - 1)) as f64;
            let kernel = nn * nn.log2().max(1.0);
            let cells = self.alternatives.len() as f64;
            for t in &self.tests {
                match t {
                    TestChoice::RrCvm { weights } => {
                        let k = weights.len() as f64;
                        total += match self.calibration {
                            Calibration::Permutation => cells * k * reps * m * kernel,
                            Calibration::NullQuantile => {
                                cells * k * (reps + self.null_reps as f64) * kernel
                            }
                        };
                    }
                    TestChoice::RrSup => {
                        total += match self.calibration {
                            Calibration::Permutation => cells * reps * m * kernel,
                            Calibration::NullQuantile => {
                                cells * (reps + self.null_reps as f64) * kernel
                            }
                        };
                    }
                    TestChoice::Dcov | TestChoice::Hsic => {
                        total += cells * reps * m * (n * n) as f64;
                    }
                    TestChoice::Psk => total += cells * reps * (n * n) as f64,
                }
            }
        }
        total
    }
}

/// One estimated cell. `elapsed` is cumulative seconds spent evaluating
/// this cell's test, populated only on timed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub alternative: String,
    pub n: usize,
    pub test: String,
    pub weight: String,
    pub power: f64,
    pub se: f64,
    pub reps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    /// Fixed three decimals to mirror the printed tables; full precision
    /// stays in the JSON form.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["alternative", "n", "test", "weight", "power", "se", "reps", "elapsed"])?;
        for r in &self.rows {
            w.write_record([
                r.alternative.as_str(),
                &r.n.to_string(),
                r.test.as_str(),
                r.weight.as_str(),
                &format!("{:.3}", r.power),
                &format!("{:.3}", r.se),
                &r.reps.to_string(),
                &r.elapsed.map(|e| format!("{e:.3}")).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is ascii"))
    }
}

/// Stable row label: the model name plus any explicit parameters.
pub fn alternative_label(spec: &AlternativeSpec) -> String {
    if spec.params.is_empty() {
        return spec.name.as_str().to_string();
    }
    let params: Vec<String> =
        spec.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{}({})", spec.name.as_str(), params.join(","))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Expanded test list: one slot per table column.
#[derive(Clone)]
enum Variant {
    Rr { kind: StatKind, choice: WeightChoice, weight_label: String },
    Dcov,
    Psk,
    Hsic,
}

impl Variant {
    fn test_name(&self) -> &'static str {
        match self {
            Variant::Rr { kind: StatKind::Cvm, .. } => "rr_cvm",
            Variant::Rr { kind: StatKind::Sup, .. } => "rr_sup",
            Variant::Dcov => "dcov",
            Variant::Psk => "psk",
            Variant::Hsic => "hsic",
        }
    }

    fn weight_label(&self) -> String {
        match self {
            Variant::Rr { kind: StatKind::Cvm, weight_label, .. } => weight_label.clone(),
            _ => "-".into(),
        }
    }

    /// psk tracks its three member tests separately; the row reports the max.
    fn slots(&self) -> usize {
        if matches!(self, Variant::Psk) {
            3
        } else {
            1
        }
    }
}

fn expand_variants(tests: &[TestChoice]) -> Vec<Variant> {
    let mut out = Vec::new();
    for t in tests {
        match t {
            TestChoice::RrCvm { weights } => {
                for &choice in weights {
                    out.push(Variant::Rr {
                        kind: StatKind::Cvm,
                        choice,
                        weight_label: choice.label(),
                    });
                }
            }
            TestChoice::RrSup => out.push(Variant::Rr {
                kind: StatKind::Sup,
                choice: WeightChoice::Auto,
                weight_label: "-".into(),
            }),
            TestChoice::Dcov => out.push(Variant::Dcov),
            TestChoice::Psk => out.push(Variant::Psk),
            TestChoice::Hsic => out.push(Variant::Hsic),
        }
    }
    out
}

/// Independent-copy null: X from one fresh draw of the alternative, Y from
/// another, then the normal-scores transform. This is the null matching
/// each alternative's marginal laws.
fn null_copy_sample(alt: &AlternativeSpec, n: usize, seed: u64) -> Result<PairedSample> {
    let mut spec_x = alt.clone();
    spec_x.n = n;
    spec_x.seed = derive_seed(seed, streams::GENERATE, 1);
    let mut spec_y = alt.clone();
    spec_y.n = n;
    spec_y.seed = derive_seed(seed, streams::GENERATE, 2);
    let sx = generate(&spec_x)?;
    let sy = generate(&spec_y)?;
    let mixed = PairedSample::new(sx.xs, sy.ys, sx.metric_x, sy.metric_y)?;
    normal_scores_sample(&mixed)
}

struct CellAccumulator {
    rejections: Vec<usize>,
    elapsed: Vec<f64>,
}

impl CellAccumulator {
    fn zero(slots: usize) -> Self {
        Self { rejections: vec![0; slots], elapsed: vec![0.0; slots] }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.rejections.iter_mut().zip(&other.rejections) {
            *a += b;
        }
        for (a, b) in self.elapsed.iter_mut().zip(&other.elapsed) {
            *a += b;
        }
        self
    }
}

/// Runs the full study. Cells are deterministic in (config, master_seed)
/// and independent of thread count; `timing` adds cumulative per-cell
/// seconds to the output.
pub fn run_power_study(config: &PowerStudyConfig, timing: bool) -> Result<PowerTable> {
    config.validate()?;
    let variants = expand_variants(&config.tests);
    let slot_offsets: Vec<usize> = variants
        .iter()
        .scan(0, |acc, v| {
            let start = *acc;
            *acc += v.slots();
            Some(start)
        })
        .collect();
    let total_slots: usize = variants.iter().map(Variant::slots).sum();
    let mut rows = Vec::new();

    for alt in &config.alternatives {
        let label = alternative_label(alt);
        for &n in &config.n_values {
            let cell_stream = fnv1a(label.as_bytes()) ^ (n as u64);
            // Null critical values, one per recurrence-test column.
            let mut criticals: HashMap<usize, f64> = HashMap::new();
            if config.calibration == Calibration::NullQuantile {
                for (vi, v) in variants.iter().enumerate() {
                    if let Variant::Rr { kind, choice, weight_label } = v {
                        let cv_seed = derive_seed(
                            config.master_seed,
                            streams::NULL_CALIBRATION,
                            fnv1a(format!("{label}|{n}|{kind:?}|{weight_label}").as_bytes()),
                        );
                        let crit = critical_value(
                            |s, n| null_copy_sample(alt, n, s),
                            n,
                            choice,
                            *kind,
                            config.level,
                            config.null_reps,
                            cv_seed,
                        )?;
                        criticals.insert(vi, crit);
                    }
                }
            }

            let acc = (0..config.power_reps as u64)
                .into_par_iter()
                .map(|rep| -> Result<CellAccumulator> {
                    let mut acc = CellAccumulator::zero(total_slots);
                    let rep_seed = derive_seed(config.master_seed, cell_stream, rep);
                    let mut spec = alt.clone();
                    spec.n = n;
                    spec.seed = rep_seed;
                    let raw = generate(&spec)?;
                    let transformed = if config.calibration == Calibration::NullQuantile
                        && variants.iter().any(|v| matches!(v, Variant::Rr { .. }))
                    {
                        Some(normal_scores_sample(&raw)?)
                    } else {
                        None
                    };
                    for (vi, v) in variants.iter().enumerate() {
                        let slot = slot_offsets[vi];
                        let start = Instant::now();
                        match v {
                            Variant::Rr { kind, choice, .. } => {
                                let rejected = match config.calibration {
                                    Calibration::NullQuantile => {
                                        let sample = transformed.as_ref().expect("transformed");
                                        let (dx, dy) = sample.distance_matrices()?;
                                        let pairs = pair_arrays(&dx, &dy)?;
                                        let w = choice.resolve(&pairs)?;
                                        let t = match kind {
                                            StatKind::Cvm => tn_fast(&pairs, &w)?.t,
                                            StatKind::Sup => tsup(&pairs)?.t,
                                        };
                                        t > criticals[&vi]
                                    }
                                    Calibration::Permutation => {
                                        let (dx, dy) = raw.distance_matrices()?;
                                        let pairs = pair_arrays(&dx, &dy)?;
                                        let w = choice.resolve(&pairs)?;
                                        let result = permutation_pvalue(
                                            &dx,
                                            &dy,
                                            &w,
                                            *kind,
                                            config.perm_m,
                                            rep_seed,
                                            Estimator::Basic,
                                        )?;
                                        result.p_value < config.level
                                    }
                                };
                                acc.rejections[slot] += usize::from(rejected);
                            }
                            Variant::Dcov => {
                                let r = dcov_test(&raw, config.perm_m, rep_seed)?;
                                acc.rejections[slot] += usize::from(r.p_value < config.level);
                            }
                            Variant::Hsic => {
                                let r = hsic_test(&raw, config.perm_m, rep_seed)?;
                                acc.rejections[slot] += usize::from(r.p_value < config.level);
                            }
                            Variant::Psk => {
                                let p = psk_pvalues(&raw)?;
                                acc.rejections[slot] += usize::from(p.pearson < config.level);
                                acc.rejections[slot + 1] +=
                                    usize::from(p.spearman < config.level);
                                acc.rejections[slot + 2] +=
                                    usize::from(p.kendall < config.level);
                            }
                        }
                        acc.elapsed[slot] += start.elapsed().as_secs_f64();
                    }
                    Ok(acc)
                })
                .try_reduce(|| CellAccumulator::zero(total_slots), |a, b| Ok(a.merge(b)))?;

            let reps = config.power_reps;
            for (vi, v) in variants.iter().enumerate() {
                let slot = slot_offsets[vi];
                let count = if matches!(v, Variant::Psk) {
                    *acc.rejections[slot..slot + 3].iter().max().expect("three slots")
                } else {
                    acc.rejections[slot]
                };
                let power = count as f64 / reps as f64;
                rows.push(PowerRow {
                    alternative: label.clone(),
                    n,
                    test: v.test_name().to_string(),
                    weight: v.weight_label(),
                    power,
                    se: (power * (1.0 - power) / reps as f64).sqrt(),
                    reps,
                    elapsed: timing.then(|| acc.elapsed[slot..slot + v.slots()].iter().sum()),
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        (&a.alternative, a.n, &a.test, &a.weight)
            .cmp(&(&b.alternative, b.n, &b.test, &b.weight))
    });
    Ok(PowerTable { rows })
}

/// iid standard-normal scalar pairs; the plain null for size checks.
pub fn independent_normal_sample(n: usize, seed: u64) -> Result<PairedSample> {
    let mut rng = rng_for(seed, streams::GENERATE, 0);
    let xs = (0..n).map(|_| vec![rng.sample::<f64, _>(rand_distr::StandardNormal)]).collect();
    let ys = (0..n).map(|_| vec![rng.sample::<f64, _>(rand_distr::StandardNormal)]).collect();
    PairedSample::new(xs, ys, Metric::Absolute, Metric::Absolute)
}
