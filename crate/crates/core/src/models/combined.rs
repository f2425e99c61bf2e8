//! Static-feature branch and activity-history branch joined before the
//! output layer.

use ndarray::Array2;

use super::nets::{one_hot_rows, CombinedBatch, CombinedNet};
use super::train::{fit, LossHistory, TrainConfig};
use crate::activity::{decide, ActivityType, PassengerFeatures, N_ACTIVITIES, N_FEATURES, N_UNITS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{Cohort, Predictor, Session};
use crate::nn::LstmState;
use crate::seed::rng_for;

pub const COMBINED_JOB: &str = "combined";

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedModel {
    pub net: CombinedNet,
    pub history: LossHistory,
}

pub fn train_combined(train: &Dataset, config: &TrainConfig) -> Result<CombinedModel> {
    let mut rng = rng_for(config.seed, COMBINED_JOB);
    let mut net = CombinedNet::init(N_FEATURES, config.fnn_hidden, config.lstm_hidden, &mut rng);
    let x = train.feature_matrix();
    let seqs = train.unit_arrays();
    let history = fit(&mut net, seqs.len(), config.lstm_epochs, config, &mut rng, |idx| CombinedBatch {
        features: x.select(ndarray::Axis(0), idx),
        sequences: idx.iter().map(|&i| seqs[i]).collect(),
    })?;
    Ok(CombinedModel { net, history })
}

impl CombinedModel {
    /// Distribution over the activity in the unit after the prefix.
    pub fn predict_combined(&self, f: &PassengerFeatures, prefix: &[ActivityType]) -> Result<[f64; N_ACTIVITIES]> {
        if prefix.is_empty() {
            return Err(Error::Validation("empty prefix".into()));
        }
        if prefix.len() >= N_UNITS {
            return Err(Error::Domain(format!(
                "prefix of {} units leaves nothing to predict",
                prefix.len()
            )));
        }
        let x = Array2::from_shape_vec((1, N_FEATURES), f.to_vec().to_vec()).expect("one row");
        let s = self.net.static_activations(&x)?;
        let mut state = LstmState::zeros(1, self.net.hidden());
        for &a in prefix {
            state = self.net.cell.advance(&one_hot_rows(&[a]), &state)?;
        }
        let p = self.net.probabilities(&state, &s);
        Ok(std::array::from_fn(|c| p[[0, c]]))
    }
}

impl Predictor for CombinedModel {
    fn describe(&self) -> String {
        "combined h=1".into()
    }

    fn lead(&self) -> Option<usize> {
        Some(1)
    }

    fn begin<'a>(&'a self, cohort: &Cohort) -> Result<Box<dyn Session + 'a>> {
        Ok(Box::new(CombinedSession {
            model: self,
            s: self.net.static_activations(&cohort.features)?,
            state: LstmState::zeros(cohort.len(), self.net.hidden()),
        }))
    }
}

struct CombinedSession<'a> {
    model: &'a CombinedModel,
    s: Array2<f64>,
    state: LstmState,
}

impl Session for CombinedSession<'_> {
    fn observe(&mut self, activities: &[ActivityType]) -> Result<()> {
        self.state = self.model.net.cell.advance(&one_hot_rows(activities), &self.state)?;
        Ok(())
    }

    fn predict(&mut self, _: usize) -> Result<Vec<ActivityType>> {
        let p = self.model.net.probabilities(&self.state, &self.s);
        Ok(p.rows()
            .into_iter()
            .map(|r| decide(r.as_slice().expect("fresh array")))
            .collect())
    }
}
