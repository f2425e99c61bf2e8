//! Per-unit misclassification curves, critical-period means, the input
//! ablation and the recursive/direct strategy comparison.
//!
//! Predictors never see a test sequence directly. The evaluator opens a
//! [`Session`] over the test passengers' features and reveals the observed
//! activities one unit at a time, so a predictor with lead `h` can only have
//! seen units `0..=k-h` when asked about unit `k`.

pub mod report;
pub mod studies;
pub mod svg;

use ndarray::Array2;

use crate::activity::{ActivityType, CriticalPeriod, N_UNITS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub use report::EvaluationReport;
pub use studies::{ablation_study, strategy_comparison, AblationTable, StrategyRow, StrategyTable};

/// What a predictor may know about the test passengers up front.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub ids: Vec<String>,
    /// `[n, 5]` static feature rows.
    pub features: Array2<f64>,
}

impl Cohort {
    pub fn of(ds: &Dataset) -> Self {
        Self {
            ids: ds.ids(),
            features: ds.feature_matrix(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub trait Predictor: Sync {
    fn describe(&self) -> String;

    /// Units between the last observed unit and the predicted one; `None`
    /// for predictors that use no activity history.
    fn lead(&self) -> Option<usize>;

    fn begin<'a>(&'a self, cohort: &Cohort) -> Result<Box<dyn Session + 'a>>;
}

pub trait Session {
    /// Reveals the observed activities of the next unit, one per passenger.
    fn observe(&mut self, activities: &[ActivityType]) -> Result<()>;

    /// Decisions for unit `unit`, one per passenger.
    fn predict(&mut self, unit: usize) -> Result<Vec<ActivityType>>;
}

/// Decisions per unit for every test passenger; `None` where the predictor
/// has no valid prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub units: Vec<Option<Vec<ActivityType>>>,
}

pub fn predict_all(predictor: &dyn Predictor, test: &Dataset) -> Result<Predictions> {
    if test.is_empty() {
        return Err(Error::Validation("empty test set".into()));
    }
    let cohort = Cohort::of(test);
    let truth = test.unit_arrays();
    let column = |k: usize| -> Vec<ActivityType> { truth.iter().map(|s| s[k]).collect() };
    let mut session = predictor.begin(&cohort)?;
    let mut observed = 0;
    let mut units = Vec::with_capacity(N_UNITS);
    for k in 0..N_UNITS {
        if let Some(h) = predictor.lead() {
            if k < h {
                units.push(None);
                continue;
            }
            while observed <= k - h {
                session.observe(&column(observed))?;
                observed += 1;
            }
        }
        let decisions = session.predict(k)?;
        if decisions.len() != test.len() {
            return Err(Error::Shape(format!(
                "{}: {} decisions for {} passengers at unit {k}",
                predictor.describe(),
                decisions.len(),
                test.len()
            )));
        }
        units.push(Some(decisions));
    }
    Ok(Predictions { units })
}

/// Fraction of passengers whose decision differs from the observed activity.
pub fn curve_from_predictions(predictions: &Predictions, test: &Dataset) -> Vec<Option<f64>> {
    let truth = test.unit_arrays();
    predictions
        .units
        .iter()
        .enumerate()
        .map(|(k, decided)| {
            decided.as_ref().map(|d| {
                let wrong = d.iter().zip(&truth).filter(|(p, s)| **p != s[k]).count();
                wrong as f64 / truth.len() as f64
            })
        })
        .collect()
}

pub fn misclassification_curve(
    predictor: &dyn Predictor,
    test: &Dataset,
    critical: CriticalPeriod,
) -> Result<EvaluationReport> {
    let predictions = predict_all(predictor, test)?;
    EvaluationReport::new(
        predictor.describe(),
        predictor.lead().unwrap_or(0),
        curve_from_predictions(&predictions, test),
        critical,
        test.len(),
    )
}

/// Mean of `curve` over the critical units.
pub fn critical_period_mean(curve: &[Option<f64>], critical: CriticalPeriod) -> Result<f64> {
    let mut total = 0.0;
    for k in critical.units() {
        match curve.get(k).copied().flatten() {
            Some(r) => total += r,
            None => {
                return Err(Error::Validation(format!(
                    "no prediction at critical unit {k}"
                )))
            }
        }
    }
    Ok(total / critical.len() as f64)
}

/// Predicts a fixed activity per unit; the majority baseline and test
/// doubles are built on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPerUnit {
    pub name: String,
    pub units: [ActivityType; N_UNITS],
}

impl Predictor for ConstantPerUnit {
    fn describe(&self) -> String {
        self.name.clone()
    }

    fn lead(&self) -> Option<usize> {
        None
    }

    fn begin<'a>(&'a self, cohort: &Cohort) -> Result<Box<dyn Session + 'a>> {
        Ok(Box::new(ConstantSession {
            units: self.units,
            n: cohort.len(),
        }))
    }
}

struct ConstantSession {
    units: [ActivityType; N_UNITS],
    n: usize,
}

impl Session for ConstantSession {
    fn observe(&mut self, _: &[ActivityType]) -> Result<()> {
        Ok(())
    }

    fn predict(&mut self, unit: usize) -> Result<Vec<ActivityType>> {
        Ok(vec![self.units[unit]; self.n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures;
    use crate::synthgen::{generate_population, population_summary, GeneratorParams};
    use std::cell::RefCell;
    use std::sync::Mutex;

    /// Returns the true labels, read from a copy of the test set.
    struct Oracle(Vec<[ActivityType; N_UNITS]>, bool);

    impl Predictor for Oracle {
        fn describe(&self) -> String {
            "oracle".into()
        }
        fn lead(&self) -> Option<usize> {
            None
        }
        fn begin<'a>(&'a self, _: &Cohort) -> Result<Box<dyn Session + 'a>> {
            Ok(Box::new(OracleSession(self)))
        }
    }

    struct OracleSession<'a>(&'a Oracle);

    impl Session for OracleSession<'_> {
        fn observe(&mut self, _: &[ActivityType]) -> Result<()> {
            Ok(())
        }
        fn predict(&mut self, unit: usize) -> Result<Vec<ActivityType>> {
            Ok(self
                .0
                 .0
                .iter()
                .map(|s| {
                    let a = s[unit];
                    if self.0 .1 {
                        ActivityType::ALL[(a.index() + 1) % 6]
                    } else {
                        a
                    }
                })
                .collect())
        }
    }

    #[test]
    fn oracle_and_anti_oracle() {
        let test = fixtures::small(20);
        let right = misclassification_curve(
            &Oracle(test.unit_arrays(), false),
            &test,
            CriticalPeriod::default(),
        )
        .unwrap();
        assert!(right.curve.iter().all(|r| *r == Some(0.0)));
        let wrong = misclassification_curve(
            &Oracle(test.unit_arrays(), true),
            &test,
            CriticalPeriod::default(),
        )
        .unwrap();
        assert!(wrong.curve.iter().all(|r| *r == Some(1.0)));
        assert_eq!(wrong.critical_mean, 1.0);
    }

    #[test]
    fn constant_predictor_rate_is_one_minus_frequency() {
        let params = GeneratorParams {
            n_passengers: 300,
            ..GeneratorParams::default()
        };
        let ds = generate_population(&params).unwrap();
        let freq = population_summary(&ds).unwrap();
        for c in ActivityType::ALL {
            let p = ConstantPerUnit {
                name: "constant".into(),
                units: [c; N_UNITS],
            };
            let report = misclassification_curve(&p, &ds, CriticalPeriod::default()).unwrap();
            for k in 0..N_UNITS {
                let expected = 1.0 - freq[k][c.index()];
                assert!((report.curve[k].unwrap() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn critical_mean_examples() {
        let cp = CriticalPeriod::default();
        assert_eq!(critical_period_mean(&[Some(0.0); N_UNITS], cp).unwrap(), 0.0);
        assert_eq!(critical_period_mean(&[Some(0.5); N_UNITS], cp).unwrap(), 0.5);
        let ramp: Vec<Option<f64>> = (0..N_UNITS).map(|k| Some(k as f64 / 35.0)).collect();
        let expected = (16..=30).sum::<usize>() as f64 / (15.0 * 35.0);
        assert!((critical_period_mean(&ramp, cp).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 23.0 / 35.0).abs() < 1e-15);
        let mut gap = vec![Some(0.1); N_UNITS];
        gap[20] = None;
        assert!(critical_period_mean(&gap, cp).is_err());
    }

    #[test]
    fn empty_test_set_is_an_error() {
        let empty = Dataset::new(vec![], "none").unwrap();
        let p = ConstantPerUnit {
            name: "c".into(),
            units: [ActivityType::Waiting; N_UNITS],
        };
        assert!(misclassification_curve(&p, &empty, CriticalPeriod::default()).is_err());
    }

    /// Records how many units it has seen whenever it is asked to predict.
    struct Spy {
        lead: usize,
        log: Mutex<Vec<(usize, usize)>>,
    }

    impl Predictor for Spy {
        fn describe(&self) -> String {
            "spy".into()
        }
        fn lead(&self) -> Option<usize> {
            Some(self.lead)
        }
        fn begin<'a>(&'a self, cohort: &Cohort) -> Result<Box<dyn Session + 'a>> {
            Ok(Box::new(SpySession {
                spy: self,
                seen: RefCell::new(0),
                n: cohort.len(),
            }))
        }
    }

    struct SpySession<'a> {
        spy: &'a Spy,
        seen: RefCell<usize>,
        n: usize,
    }

    impl Session for SpySession<'_> {
        fn observe(&mut self, a: &[ActivityType]) -> Result<()> {
            assert_eq!(a.len(), self.n);
            *self.seen.borrow_mut() += 1;
            Ok(())
        }
        fn predict(&mut self, unit: usize) -> Result<Vec<ActivityType>> {
            self.spy.log.lock().unwrap().push((unit, *self.seen.borrow()));
            Ok(vec![ActivityType::Waiting; self.n])
        }
    }

    #[test]
    fn sequence_predictors_see_only_the_allowed_prefix() {
        let test = fixtures::small(5);
        for lead in 1..=6 {
            let spy = Spy {
                lead,
                log: Mutex::new(vec![]),
            };
            let report = misclassification_curve(&spy, &test, CriticalPeriod::default()).unwrap();
            let log = spy.log.into_inner().unwrap();
            assert_eq!(log.len(), N_UNITS - lead);
            for (unit, seen) in log {
                // Units 0..=unit-lead, and nothing later.
                assert_eq!(seen, unit - lead + 1);
            }
            assert!(report.curve[..lead].iter().all(Option::is_none));
            assert!(report.curve[lead..].iter().all(Option::is_some));
        }
    }

    #[test]
    fn curve_ignores_test_order() {
        let test = fixtures::small(12);
        let mut reversed: Vec<_> = test.samples().to_vec();
        reversed.reverse();
        let reversed = Dataset::new(reversed, "reversed").unwrap();
        let p = ConstantPerUnit {
            name: "c".into(),
            units: [ActivityType::Mandatory; N_UNITS],
        };
        let a = misclassification_curve(&p, &test, CriticalPeriod::default()).unwrap();
        let b = misclassification_curve(&p, &reversed, CriticalPeriod::default()).unwrap();
        assert_eq!(a, b);
    }
}
