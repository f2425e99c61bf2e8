//! Majority-class and random-input reference predictors.

use super::fnn::{train_fnn_set_with, FnnInputs};
use super::train::TrainConfig;
use crate::activity::{ActivityType, CriticalPeriod, N_ACTIVITIES, N_UNITS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{misclassification_curve, ConstantPerUnit, EvaluationReport};
use crate::seed::derive_seed;

pub const NOISE_JOB: &str = "random-input";

/// Per-unit activity counts over a dataset.
pub fn unit_counts(ds: &Dataset) -> [[usize; N_ACTIVITIES]; N_UNITS] {
    let mut counts = [[0; N_ACTIVITIES]; N_UNITS];
    for seq in ds.sequences() {
        for (k, a) in seq.units().iter().enumerate() {
            counts[k][a.index()] += 1;
        }
    }
    counts
}

/// The most frequent training activity at every unit, lower code on ties.
pub fn majority_baseline(train: &Dataset) -> Result<ConstantPerUnit> {
    if train.is_empty() {
        return Err(Error::Validation("empty training split".into()));
    }
    let counts = unit_counts(train);
    let units = std::array::from_fn(|k| {
        let row = &counts[k];
        let best = (0..N_ACTIVITIES).fold(0, |b, c| if row[c] > row[b] { c } else { b });
        ActivityType::ALL[best]
    });
    Ok(ConstantPerUnit {
        name: "majority".into(),
        units,
    })
}

/// Seed of the noise inputs used by the random-input benchmark.
pub fn noise_seed(config: &TrainConfig) -> u64 {
    derive_seed(config.seed, NOISE_JOB)
}

/// FNN set trained and evaluated on uniform noise in place of the features.
pub fn random_input_benchmark(
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    critical: CriticalPeriod,
) -> Result<EvaluationReport> {
    let set = train_fnn_set_with(train, FnnInputs::Noise(noise_seed(config)), config)?;
    misclassification_curve(&set, test, critical)
}
