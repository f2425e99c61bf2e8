//! One small feed-forward classifier per time unit.

use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::nets::{FnnBatch, FnnNet};
use super::train::{fit, TrainConfig};
use crate::activity::{decide, ActivityType, CriticalPeriod, PassengerFeatures, FEATURE_NAMES, N_ACTIVITIES, N_FEATURES, N_UNITS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{misclassification_curve, Cohort, Predictor, Session};
use crate::seed::rng_for;

/// What the per-unit networks take as input.
#[derive(Debug, Clone, PartialEq)]
pub enum FnnInputs {
    /// The listed feature columns, in order.
    Features(Vec<usize>),
    /// Five i.i.d. uniform(0, 1) values per passenger, drawn from a stream
    /// keyed by this seed and the passenger id.
    Noise(u64),
}

impl FnnInputs {
    pub fn all() -> Self {
        Self::Features((0..N_FEATURES).collect())
    }

    /// Every feature except `removed`.
    pub fn without(removed: usize) -> Self {
        Self::Features((0..N_FEATURES).filter(|&i| i != removed).collect())
    }

    pub fn width(&self) -> usize {
        match self {
            Self::Features(cols) => cols.len(),
            Self::Noise(_) => N_FEATURES,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Features(cols) if cols.len() == N_FEATURES => "fnn".into(),
            Self::Features(cols) => {
                let missing: Vec<&str> = (0..N_FEATURES)
                    .filter(|i| !cols.contains(i))
                    .map(|i| FEATURE_NAMES[i])
                    .collect();
                format!("fnn without {}", missing.join("+"))
            }
            Self::Noise(_) => "fnn random inputs".into(),
        }
    }

    /// Input rows for a cohort.
    pub fn matrix(&self, cohort: &Cohort) -> Array2<f64> {
        match self {
            Self::Features(cols) => cohort.features.select(Axis(1), cols),
            Self::Noise(seed) => noise_inputs(*seed, &cohort.ids),
        }
    }
}

pub fn noise_inputs(seed: u64, ids: &[String]) -> Array2<f64> {
    let mut x = Array2::zeros((ids.len(), N_FEATURES));
    for (mut row, id) in x.rows_mut().into_iter().zip(ids) {
        let mut rng = rng_for(seed, &format!("noise:{id}"));
        row.iter_mut().for_each(|v| *v = rng.random::<f64>());
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnSet {
    pub inputs: FnnInputs,
    /// Network `k` classifies unit `k`.
    pub nets: Vec<FnnNet>,
}

pub fn unit_job(k: usize) -> String {
    format!("fnn/unit-{k}")
}

pub fn train_fnn_set(train: &Dataset, config: &TrainConfig) -> Result<FnnSet> {
    train_fnn_set_with(train, FnnInputs::all(), config)
}

pub fn train_fnn_set_with(train: &Dataset, inputs: FnnInputs, config: &TrainConfig) -> Result<FnnSet> {
    if train.is_empty() {
        return Err(Error::Validation("empty training split".into()));
    }
    config.validate()?;
    let x = inputs.matrix(&Cohort::of(train));
    let seqs = train.unit_arrays();
    let nets = (0..N_UNITS)
        .into_par_iter()
        .map(|k| {
            let targets: Vec<usize> = seqs.iter().map(|s| s[k].index()).collect();
            train_unit(&x, &targets, k, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FnnSet { inputs, nets })
}

/// Trains the classifier of unit `k` on input rows `x` and class targets.
pub fn train_unit(x: &Array2<f64>, targets: &[usize], k: usize, config: &TrainConfig) -> Result<FnnNet> {
    let mut rng = rng_for(config.seed, &unit_job(k));
    let mut net = FnnNet::init(x.ncols(), config.fnn_hidden, &mut rng);
    fit(&mut net, targets.len(), config.fnn_epochs, config, &mut rng, |idx| FnnBatch {
        x: x.select(Axis(0), idx),
        targets: idx.iter().map(|&i| targets[i]).collect(),
    })?;
    Ok(net)
}

impl FnnSet {
    fn net(&self, k: usize) -> Result<&FnnNet> {
        self.nets
            .get(k)
            .ok_or_else(|| Error::Domain(format!("unit {k} outside 0..{N_UNITS}")))
    }

    /// Class probabilities of unit `k` for one passenger.
    pub fn predict_fnn(&self, f: &PassengerFeatures, k: usize) -> Result<[f64; N_ACTIVITIES]> {
        let net = self.net(k)?;
        let cols = match &self.inputs {
            FnnInputs::Features(cols) => cols,
            FnnInputs::Noise(_) => {
                return Err(Error::Validation(
                    "a random-input set predicts from noise rows, not features".into(),
                ))
            }
        };
        let all = f.to_vec();
        let row: Vec<f64> = cols.iter().map(|&c| all[c]).collect();
        let x = Array2::from_shape_vec((1, row.len()), row).expect("one row");
        let p = net.probabilities(&x)?;
        Ok(std::array::from_fn(|c| p[[0, c]]))
    }

    /// Class probabilities of unit `k` for prepared input rows.
    pub fn predict_rows(&self, x: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
        self.net(k)?.probabilities(x)
    }
}

impl Predictor for FnnSet {
    fn describe(&self) -> String {
        self.inputs.describe()
    }

    fn lead(&self) -> Option<usize> {
        None
    }

    fn begin<'a>(&'a self, cohort: &Cohort) -> Result<Box<dyn Session + 'a>> {
        Ok(Box::new(FnnSession {
            set: self,
            x: self.inputs.matrix(cohort),
        }))
    }
}

struct FnnSession<'a> {
    set: &'a FnnSet,
    x: Array2<f64>,
}

impl Session for FnnSession<'_> {
    fn observe(&mut self, _: &[ActivityType]) -> Result<()> {
        Ok(())
    }

    fn predict(&mut self, unit: usize) -> Result<Vec<ActivityType>> {
        let p = self.set.predict_rows(&self.x, unit)?;
        Ok(p.rows().into_iter().map(|r| decide(r.as_slice().expect("fresh array"))).collect())
    }
}

/// Critical-period misclassification of an FNN set per hidden size.
pub fn hidden_size_sweep(
    train: &Dataset,
    test: &Dataset,
    sizes: &[usize],
    config: &TrainConfig,
    critical: CriticalPeriod,
) -> Result<Vec<(usize, f64)>> {
    if sizes.is_empty() {
        return Err(Error::Validation("no hidden sizes to sweep".into()));
    }
    sizes
        .iter()
        .map(|&size| {
            let cfg = TrainConfig {
                fnn_hidden: size,
                ..config.clone()
            };
            let set = train_fnn_set(train, &cfg)?;
            Ok((size, misclassification_curve(&set, test, critical)?.critical_mean))
        })
        .collect()
}

/// Size with the lowest rate; the first on ties.
pub fn select_hidden_size(sweep: &[(usize, f64)]) -> Option<usize> {
    sweep
        .iter()
        .fold(None, |best: Option<(usize, f64)>, &(s, r)| match best {
            Some((_, b)) if b <= r => best,
            _ => Some((s, r)),
        })
        .map(|(s, _)| s)
}

/// Softmax rows sum to one; used by tests across the models.
#[cfg(test)]
pub(crate) fn rows_are_distributions(p: &Array2<f64>) -> bool {
    p.rows()
        .into_iter()
        .all(|r| (r.sum() - 1.0).abs() < 1e-9 && r.iter().all(|&v| v >= 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::ActivitySequence;
    use crate::dataset::Sample;
    use crate::nn::Parameters;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Unit 10 is Mandatory when earliness > 0.5 and NotAtAirport otherwise;
    /// every other unit is constant.
    fn threshold_set(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|i| {
                let earliness = rng.random::<f64>();
                let mut units = [ActivityType::NotAtAirport; N_UNITS];
                let arrival = if earliness > 0.5 { 10 } else { 11 };
                for u in units.iter_mut().skip(arrival) {
                    *u = ActivityType::Mandatory;
                }
                for u in units.iter_mut().skip(12) {
                    *u = ActivityType::Waiting;
                }
                Sample {
                    features: PassengerFeatures::new(rng.random(), earliness, i % 2 == 0, i % 3 == 0, false)
                        .unwrap(),
                    sequence: ActivitySequence::new(format!("p{i}"), None, units).unwrap(),
                }
            })
            .collect();
        Dataset::new(samples, "threshold").unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            fnn_epochs: 60,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_unit_is_learned() {
        let train = threshold_set(400, 1);
        let test = threshold_set(200, 2);
        let set = train_fnn_set(&train, &quick()).unwrap();
        let report = misclassification_curve(&set, &test, CriticalPeriod::default()).unwrap();
        assert!(report.curve[10].unwrap() <= 0.05, "{:?}", report.curve[10]);
        // Constant units converge to their label.
        let f = test.samples()[0].features;
        assert!(set.predict_fnn(&f, 30).unwrap()[ActivityType::Waiting.index()] >= 0.99);
        let early = PassengerFeatures::new(0.5, 0.1, false, false, false).unwrap();
        assert_eq!(decide(&set.predict_fnn(&early, 10).unwrap()), ActivityType::NotAtAirport);
    }

    #[test]
    fn predictions_are_pure_distributions() {
        let train = threshold_set(50, 3);
        let cfg = TrainConfig { fnn_epochs: 2, ..quick() };
        let set = train_fnn_set(&train, &cfg).unwrap();
        let f = train.samples()[3].features;
        let a = set.predict_fnn(&f, 7).unwrap();
        assert_eq!(a, set.predict_fnn(&f, 7).unwrap());
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(set.predict_fnn(&f, N_UNITS).is_err());
        assert!(rows_are_distributions(&set.predict_rows(&train.feature_matrix(), 0).unwrap()));
    }

    #[test]
    fn training_is_deterministic_and_units_independent() {
        let train = threshold_set(60, 4);
        let cfg = TrainConfig { fnn_epochs: 3, ..quick() };
        let a = train_fnn_set(&train, &cfg).unwrap();
        let b = train_fnn_set(&train, &cfg).unwrap();
        for (x, y) in a.nets.iter().zip(&b.nets) {
            assert_eq!(x.to_paxnn(), y.to_paxnn());
        }
        // Retraining unit 5 with another seed changes only unit 5.
        let x = train.feature_matrix();
        let targets: Vec<usize> = train.unit_arrays().iter().map(|s| s[5].index()).collect();
        let other = train_unit(&x, &targets, 5, &TrainConfig { seed: 7, ..cfg.clone() }).unwrap();
        let mut c = a.clone();
        c.nets[5] = other;
        for k in 0..N_UNITS {
            assert_eq!(c.nets[k].to_paxnn() == a.nets[k].to_paxnn(), k != 5);
        }
    }

    #[test]
    fn reduced_and_noise_inputs() {
        let train = threshold_set(40, 5);
        let cfg = TrainConfig { fnn_epochs: 1, ..quick() };
        let reduced = train_fnn_set_with(&train, FnnInputs::without(1), &cfg).unwrap();
        assert_eq!(reduced.nets[0].inputs(), 4);
        assert_eq!(reduced.describe(), "fnn without earliness");
        let noise = train_fnn_set_with(&train, FnnInputs::Noise(9), &cfg).unwrap();
        let f = train.samples()[0].features;
        assert!(noise.predict_fnn(&f, 0).is_err());
        let ids = train.ids();
        let x = noise_inputs(9, &ids);
        assert_eq!(x, noise_inputs(9, &ids));
        assert!(x.iter().all(|v| (0.0..1.0).contains(v)));
        assert_ne!(x, noise_inputs(10, &ids));
    }

    #[test]
    fn sweep_rows_match_sizes() {
        let train = threshold_set(40, 6);
        let cfg = TrainConfig { fnn_epochs: 1, ..quick() };
        let one = hidden_size_sweep(&train, &train, &[6], &cfg, CriticalPeriod::default()).unwrap();
        assert_eq!(one.len(), 1);
        let three = hidden_size_sweep(&train, &train, &[2, 4, 6], &cfg, CriticalPeriod::default()).unwrap();
        assert_eq!(three.iter().map(|r| r.0).collect::<Vec<_>>(), vec![2, 4, 6]);
        assert!(hidden_size_sweep(&train, &train, &[], &cfg, CriticalPeriod::default()).is_err());
        assert_eq!(select_hidden_size(&[(2, 0.3), (4, 0.2), (6, 0.2)]), Some(4));
    }
}
