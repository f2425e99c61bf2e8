//! Next-step LSTM and the recursive and direct multi-step strategies.

use rayon::prelude::*;

use super::nets::{one_hot_rows, LstmNet, SequenceBatch};
use super::train::{fit, LossHistory, TrainConfig};
use crate::activity::{decide, ActivityType, N_ACTIVITIES, N_UNITS};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{Cohort, Predictor, Session};
use crate::nn::LstmState;
use crate::seed::rng_for;

/// An LSTM trained to predict the activity `lead` units after the last
/// observed one.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmNextStep {
    pub net: LstmNet,
    pub lead: usize,
    pub history: LossHistory,
}

pub fn lstm_job(lead: usize) -> String {
    format!("lstm/h{lead}")
}

fn check_lead(lead: usize) -> Result<()> {
    if lead == 0 || lead >= N_UNITS {
        return Err(Error::Domain(format!(
            "horizon offset {lead} outside 1..{N_UNITS}"
        )));
    }
    Ok(())
}

pub fn train_lstm(train: &Dataset, lead: usize, config: &TrainConfig) -> Result<LstmNextStep> {
    check_lead(lead)?;
    let mut rng = rng_for(config.seed, &lstm_job(lead));
    let mut net = LstmNet::init(config.lstm_hidden, &mut rng);
    let seqs = train.unit_arrays();
    let history = fit(&mut net, seqs.len(), config.lstm_epochs, config, &mut rng, |idx| SequenceBatch {
        sequences: idx.iter().map(|&i| seqs[i]).collect(),
        lead,
    })?;
    Ok(LstmNextStep { net, lead, history })
}

impl LstmNextStep {
    pub fn from_net(net: LstmNet, lead: usize) -> Result<Self> {
        check_lead(lead)?;
        Ok(Self {
            net,
            lead,
            history: Vec::new(),
        })
    }

    fn check_prefix(&self, len: usize, extra: usize) -> Result<()> {
        if len == 0 {
            return Err(Error::Validation("empty prefix".into()));
        }
        if len + extra > N_UNITS {
            return Err(Error::Domain(format!(
                "prefix of {len} units plus {extra} ahead runs past the {N_UNITS}-unit horizon"
            )));
        }
        Ok(())
    }

    /// Distribution over the activity `lead` units after the prefix's last
    /// unit.
    pub fn predict_next(&self, prefix: &[ActivityType]) -> Result<[f64; N_ACTIVITIES]> {
        self.check_prefix(prefix.len(), self.lead)?;
        let state = self.net.run(&[prefix])?;
        let p = self.net.probabilities(&state);
        Ok(std::array::from_fn(|c| p[[0, c]]))
    }

    /// Feeds each decision back as the next input, `steps` times.
    pub fn forecast_recursive(&self, prefix: &[ActivityType], steps: usize) -> Result<Vec<ActivityType>> {
        if self.lead != 1 {
            return Err(Error::Validation(format!(
                "recursive forecasting needs a one-step model, this one has lead {}",
                self.lead
            )));
        }
        self.check_prefix(prefix.len(), steps)?;
        let mut state = self.net.run(&[prefix])?;
        let mut out = Vec::with_capacity(steps);
        for j in 0..steps {
            let p = self.net.probabilities(&state);
            let a = decide(p.row(0).as_slice().expect("fresh array"));
            out.push(a);
            if j + 1 < steps {
                state = self.net.cell.advance(&one_hot_rows(&[a]), &state)?;
            }
        }
        Ok(out)
    }

    fn fresh_state(&self, n: usize) -> LstmState {
        LstmState::zeros(n, self.net.hidden())
    }
}

fn decide_rows(p: &ndarray::Array2<f64>) -> Vec<ActivityType> {
    p.rows()
        .into_iter()
        .map(|r| decide(r.as_slice().expect("fresh array")))
        .collect()
}

impl Predictor for LstmNextStep {
    fn describe(&self) -> String {
        format!("lstm h={}", self.lead)
    }

    fn lead(&self) -> Option<usize> {
        Some(self.lead)
    }

    fn begin<'a>(&'a self, cohort: &Cohort) -> Result<Box<dyn Session + 'a>> {
        Ok(Box::new(LstmSession {
            model: self,
            state: self.fresh_state(cohort.len()),
        }))
    }
}

struct LstmSession<'a> {
    model: &'a LstmNextStep,
    state: LstmState,
}

impl Session for LstmSession<'_> {
    fn observe(&mut self, activities: &[ActivityType]) -> Result<()> {
        self.state = self.model.net.cell.advance(&one_hot_rows(activities), &self.state)?;
        Ok(())
    }

    fn predict(&mut self, _: usize) -> Result<Vec<ActivityType>> {
        Ok(decide_rows(&self.model.net.probabilities(&self.state)))
    }
}

/// Predicts `horizon` units ahead with a one-step model by feeding its own
/// decisions back.
#[derive(Debug, Clone, Copy)]
pub struct RecursiveForecaster<'a> {
    pub base: &'a LstmNextStep,
    pub horizon: usize,
}

impl<'a> RecursiveForecaster<'a> {
    pub fn new(base: &'a LstmNextStep, horizon: usize) -> Result<Self> {
        check_lead(horizon)?;
        if base.lead != 1 {
            return Err(Error::Validation(format!(
                "recursive forecasting needs a one-step model, got lead {}",
                base.lead
            )));
        }
        Ok(Self { base, horizon })
    }
}

impl Predictor for RecursiveForecaster<'_> {
    fn describe(&self) -> String {
        format!("lstm recursive h={}", self.horizon)
    }

    fn lead(&self) -> Option<usize> {
        Some(self.horizon)
    }

    fn begin<'b>(&'b self, cohort: &Cohort) -> Result<Box<dyn Session + 'b>> {
        Ok(Box::new(RecursiveSession {
            model: self.base,
            horizon: self.horizon,
            state: self.base.fresh_state(cohort.len()),
        }))
    }
}

struct RecursiveSession<'a> {
    model: &'a LstmNextStep,
    horizon: usize,
    state: LstmState,
}

impl Session for RecursiveSession<'_> {
    fn observe(&mut self, activities: &[ActivityType]) -> Result<()> {
        self.state = self.model.net.cell.advance(&one_hot_rows(activities), &self.state)?;
        Ok(())
    }

    fn predict(&mut self, _: usize) -> Result<Vec<ActivityType>> {
        let net = &self.model.net;
        let mut decisions = decide_rows(&net.probabilities(&self.state));
        let mut state = None;
        for _ in 1..self.horizon {
            let from = state.as_ref().unwrap_or(&self.state);
            let next = net.cell.advance(&one_hot_rows(&decisions), from)?;
            decisions = decide_rows(&net.probabilities(&next));
            state = Some(next);
        }
        Ok(decisions)
    }
}

/// Independent LSTMs for leads `1..=members.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectLstmSet {
    members: Vec<LstmNextStep>,
}

pub fn train_direct_set(train: &Dataset, max_lead: usize, config: &TrainConfig) -> Result<DirectLstmSet> {
    let members = (1..=max_lead)
        .into_par_iter()
        .map(|h| train_lstm(train, h, config))
        .collect::<Result<Vec<_>>>()?;
    DirectLstmSet::new(members)
}

impl DirectLstmSet {
    pub fn new(members: Vec<LstmNextStep>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Validation("direct set needs at least one member".into()));
        }
        for (i, m) in members.iter().enumerate() {
            if m.lead != i + 1 {
                return Err(Error::Validation(format!(
                    "direct member {i} has lead {}, expected {}",
                    m.lead,
                    i + 1
                )));
            }
            if m.net.hidden() != members[0].net.hidden() {
                return Err(Error::Shape("direct members differ in hidden size".into()));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[LstmNextStep] {
        &self.members
    }

    pub fn max_lead(&self) -> usize {
        self.members.len()
    }

    pub fn member(&self, lead: usize) -> Result<&LstmNextStep> {
        lead.checked_sub(1)
            .and_then(|i| self.members.get(i))
            .ok_or_else(|| Error::Validation(format!("no direct model for horizon {lead}")))
    }

    /// Element `j` is the decision of the lead-`j+1` model on the same
    /// prefix.
    pub fn forecast_direct(&self, prefix: &[ActivityType], steps: usize) -> Result<Vec<ActivityType>> {
        if prefix.is_empty() {
            return Err(Error::Validation("empty prefix".into()));
        }
        (1..=steps)
            .map(|h| Ok(decide(&self.member(h)?.predict_next(prefix)?)))
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::activity::CriticalPeriod;
    use crate::evaluation::misclassification_curve;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) use crate::synthgen::rule_successor as successor;

    pub(crate) fn grammar(n: usize, seed: u64) -> Dataset {
        crate::synthgen::rule_population(n, seed).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            lstm_hidden: 16,
            lstm_epochs: 40,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn small_lstm_learns_the_grammar() {
        let train = grammar(200, 1);
        let test = grammar(50, 2);
        let m = train_lstm(&train, 1, &small_config()).unwrap();
        assert!(m.history.last() < m.history.first());
        let r = misclassification_curve(&m, &test, CriticalPeriod::default()).unwrap();
        assert!(r.curve.iter().flatten().all(|&v| v == 0.0), "{:?}", r.curve);
        let prefix = &test.unit_arrays()[0][..10];
        let forecast = m.forecast_recursive(prefix, 8).unwrap();
        let mut expected = prefix[9];
        for a in forecast {
            expected = successor(expected);
            assert_eq!(a, expected);
        }
    }

    #[test]
    fn prefix_and_lead_checks() {
        let m = LstmNextStep::from_net(LstmNet::init(4, &mut ChaCha8Rng::seed_from_u64(0)), 1).unwrap();
        assert!(m.predict_next(&[]).is_err());
        let full = [ActivityType::Waiting; N_UNITS];
        assert!(m.predict_next(&full[..35]).is_ok());
        assert!(m.predict_next(&full).is_err());
        assert_eq!(m.forecast_recursive(&full[..3], 0).unwrap(), vec![]);
        assert!(m.forecast_recursive(&full[..30], 7).is_err());
        let p = m.predict_next(&full[..4]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(train_lstm(&grammar(4, 0), N_UNITS, &small_config()).is_err());
        assert!(LstmNextStep::from_net(m.net.clone(), 0).is_err());
    }

    #[test]
    fn one_step_strategies_coincide_and_members_are_isolated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let members: Vec<_> = (1..=3)
            .map(|h| LstmNextStep::from_net(LstmNet::init(5, &mut rng), h).unwrap())
            .collect();
        let set = DirectLstmSet::new(members).unwrap();
        let test = grammar(20, 4);
        for s in test.unit_arrays() {
            let prefix = &s[..12];
            assert_eq!(
                set.forecast_direct(prefix, 1).unwrap(),
                set.member(1).unwrap().forecast_recursive(prefix, 1).unwrap()
            );
        }
        let prefix = &test.unit_arrays()[0][..12];
        let before = set.forecast_direct(prefix, 3).unwrap();
        let mut changed = set.clone();
        changed.members[2].net.output.b[[0, 0]] += 50.0;
        let after = changed.forecast_direct(prefix, 3).unwrap();
        assert_eq!(before[..2], after[..2]);
        assert_eq!(after[2], ActivityType::NotAtAirport);
        assert!(set.forecast_direct(prefix, 4).is_err());
    }

    #[test]
    fn direct_members_must_be_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m2 = LstmNextStep::from_net(LstmNet::init(5, &mut rng), 2).unwrap();
        assert!(DirectLstmSet::new(vec![m2]).is_err());
        assert!(DirectLstmSet::new(vec![]).is_err());
    }

    #[test]
    fn recursive_session_matches_scalar_forecasts() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base = LstmNextStep::from_net(LstmNet::init(6, &mut rng), 1).unwrap();
        let test = grammar(7, 9);
        for h in [1, 3, 6] {
            let rec = RecursiveForecaster::new(&base, h).unwrap();
            let preds = crate::evaluation::predict_all(&rec, &test).unwrap();
            for (i, s) in test.unit_arrays().iter().enumerate() {
                for k in h..N_UNITS {
                    let scalar = base.forecast_recursive(&s[..=k - h], h).unwrap();
                    assert_eq!(preds.units[k].as_ref().unwrap()[i], scalar[h - 1]);
                }
            }
        }
        let two = LstmNextStep::from_net(base.net.clone(), 2).unwrap();
        assert!(RecursiveForecaster::new(&two, 3).is_err());
    }
}
