//! Independence testing between random elements of metric spaces through
//! recurrence rates: the closed-form Cramér–von Mises statistic and its
//! sup-norm companion, permutation and null-quantile calibration, seeded
//! generators for the simulation alternatives, baseline tests, and the
//! normal-model limit formulas used as numeric oracles.

pub mod asymptotics;
pub mod baselines;
pub mod data;
pub mod error;
mod fenwick;
pub mod generators;
pub mod io;
pub mod permutation;
pub mod power;
pub mod recurrence;
pub mod seed;
pub mod statistic;
pub mod validate;
pub mod weights;

pub use data::{
    distance_matrix, pair_arrays, repair_under_permutation, DistanceMatrix, Metric, PairArrays,
    PairedSample,
};
pub use error::{Error, Result};
pub use generators::{AlternativeName, AlternativeSpec};
pub use permutation::{Estimator, TestResult};
pub use power::{Calibration, PowerStudyConfig, PowerTable, TestChoice};
pub use statistic::{StatKind, StatValue};
pub use weights::WeightSpec;
