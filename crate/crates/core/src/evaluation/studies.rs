use rayon::prelude::*;

use super::report::metadata_lines;
use super::{misclassification_curve, EvaluationReport};
use crate::activity::{CriticalPeriod, FEATURE_NAMES, N_FEATURES, N_UNITS, UNIT_MINUTES};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::baseline::noise_seed;
use crate::models::fnn::{train_fnn_set_with, FnnInputs};
use crate::models::lstm::{DirectLstmSet, LstmNextStep, RecursiveForecaster};
use crate::models::TrainConfig;

/// Units averaged for the tail rate.
pub const TAIL_UNITS: usize = 6;

pub const ABLATION_HEADER: &str = "removed,critical_mean";
pub const STRATEGY_HEADER: &str =
    "horizon_min,recursive,direct,difference,recursive_tail,direct_tail,final_unit_recursive,final_unit_direct";

/// Critical-period rate of the FNN set with all inputs (`base`), with each
/// feature removed in turn (named by the feature) and with noise inputs
/// (`random`).
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<(String, f64)>,
    /// Full curve behind each row, same order.
    pub reports: Vec<EvaluationReport>,
    pub metadata: Vec<(String, String)>,
}

impl AblationTable {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{ABLATION_HEADER}\n");
        for (name, v) in &self.rows {
            out.push_str(&format!("{name},{v}\n"));
        }
        out.push_str(&metadata_lines(&self.metadata));
        out
    }
}

pub fn ablation_study(
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    critical: CriticalPeriod,
) -> Result<AblationTable> {
    let mut variants = vec![("base".to_string(), FnnInputs::all())];
    for (i, name) in FEATURE_NAMES.iter().enumerate().take(N_FEATURES) {
        variants.push((name.to_string(), FnnInputs::without(i)));
    }
    variants.push(("random".to_string(), FnnInputs::Noise(noise_seed(config))));
    let evaluated = variants
        .into_par_iter()
        .map(|(name, inputs)| {
            let set = train_fnn_set_with(train, inputs, config)?;
            let report = misclassification_curve(&set, test, critical)?;
            Ok(((name, report.critical_mean), report))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, reports) = evaluated.into_iter().unzip();
    Ok(AblationTable {
        rows,
        reports,
        metadata: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub horizon_units: usize,
    pub recursive: f64,
    pub direct: f64,
    pub recursive_tail: f64,
    pub direct_tail: f64,
    pub final_unit_recursive: f64,
    pub final_unit_direct: f64,
}

impl StrategyRow {
    /// Direct minus recursive critical-period rate.
    pub fn difference(&self) -> f64 {
        self.direct - self.recursive
    }

    pub fn horizon_minutes(&self) -> usize {
        self.horizon_units * UNIT_MINUTES as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTable {
    pub rows: Vec<StrategyRow>,
    /// Full curves, recursive then direct, per horizon.
    pub reports: Vec<(EvaluationReport, EvaluationReport)>,
    pub metadata: Vec<(String, String)>,
}

impl StrategyTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{STRATEGY_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.horizon_minutes(),
                r.recursive,
                r.direct,
                r.difference(),
                r.recursive_tail,
                r.direct_tail,
                r.final_unit_recursive,
                r.final_unit_direct
            ));
        }
        out.push_str(&metadata_lines(&self.metadata));
        out
    }
}

/// Mean over the last [`TAIL_UNITS`] units.
pub fn tail_rate(report: &EvaluationReport) -> Result<f64> {
    let tail = &report.curve[N_UNITS - TAIL_UNITS..];
    let sum: Option<f64> = tail.iter().copied().sum();
    sum.map(|s| s / TAIL_UNITS as f64)
        .ok_or_else(|| Error::Validation("missing predictions in the tail".into()))
}

/// Critical-period, tail and final-unit rates of the recursive strategy
/// (one-step `base` fed its own decisions) and of the direct set, at every
/// horizon the set covers.
pub fn strategy_comparison(
    base: &LstmNextStep,
    direct: &DirectLstmSet,
    test: &Dataset,
    critical: CriticalPeriod,
) -> Result<StrategyTable> {
    let evaluated = (1..=direct.max_lead())
        .into_par_iter()
        .map(|h| {
            let rec = misclassification_curve(&RecursiveForecaster::new(base, h)?, test, critical)?;
            let dir = misclassification_curve(direct.member(h)?, test, critical)?;
            let final_of = |r: &EvaluationReport| r.curve[N_UNITS - 1].expect("final unit predicted");
            let row = StrategyRow {
                horizon_units: h,
                recursive: rec.critical_mean,
                direct: dir.critical_mean,
                recursive_tail: tail_rate(&rec)?,
                direct_tail: tail_rate(&dir)?,
                final_unit_recursive: final_of(&rec),
                final_unit_direct: final_of(&dir),
            };
            Ok((row, (rec, dir)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, reports) = evaluated.into_iter().unzip();
    Ok(StrategyTable {
        rows,
        reports,
        metadata: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::lstm::tests::grammar;
    use crate::models::nets::LstmNet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn strategy_table_shape_and_first_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let members: Vec<_> = (1..=6)
            .map(|h| LstmNextStep::from_net(LstmNet::init(4, &mut rng), h).unwrap())
            .collect();
        let set = DirectLstmSet::new(members).unwrap();
        let test = grammar(30, 2);
        let table =
            strategy_comparison(set.member(1).unwrap(), &set, &test, CriticalPeriod::default()).unwrap();
        assert_eq!(table.rows.len(), 6);
        let minutes: Vec<usize> = table.rows.iter().map(StrategyRow::horizon_minutes).collect();
        assert_eq!(minutes, vec![5, 10, 15, 20, 25, 30]);
        let first = &table.rows[0];
        assert_eq!(first.recursive, first.direct);
        assert_eq!(first.difference(), 0.0);
        assert_eq!(first.recursive_tail, first.direct_tail);
        let csv = table.to_csv();
        assert!(csv.starts_with(STRATEGY_HEADER));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn ablation_has_seven_rows() {
        let ds = crate::dataset::fixtures::small(30);
        let cfg = TrainConfig {
            fnn_epochs: 1,
            ..TrainConfig::default()
        };
        let table = ablation_study(&ds, &ds, &cfg, CriticalPeriod::default()).unwrap();
        let names: Vec<&str> = table.rows.iter().map(|r| r.0.as_str()).collect();
        assert_eq!(
            names,
            vec!["base", "arrival_time", "earliness", "destination", "carrier", "brand", "random"]
        );
        assert_eq!(table, ablation_study(&ds, &ds, &cfg, CriticalPeriod::default()).unwrap());
        assert!(table.to_csv().starts_with("removed,critical_mean\nbase,"));
    }
}
