//! The three trainable network shapes and their exact gradients.

use ndarray::{s, Array2, Axis};
use rand::Rng;

use crate::activity::{ActivityType, N_ACTIVITIES, N_UNITS};
use crate::error::{Error, Result};
use crate::nn::loss::{softmax_ce, softmax_ce_loss};
use crate::nn::{Dense, Differentiable, Lstm, LstmState, LstmTrace, Parameters};

fn prefixed<'a>(prefix: &str, blocks: Vec<(String, &'a Array2<f64>)>) -> Vec<(String, &'a Array2<f64>)> {
    blocks
        .into_iter()
        .map(|(n, b)| (format!("{prefix}.{n}"), b))
        .collect()
}

/// One-hot inputs for units `0..steps`, stacked step-major:
/// `[steps * batch, 6]`.
pub(crate) fn stacked_inputs(sequences: &[[ActivityType; N_UNITS]], steps: usize) -> Array2<f64> {
    let batch = sequences.len();
    let mut x = Array2::zeros((steps * batch, N_ACTIVITIES));
    for t in 0..steps {
        for (r, seq) in sequences.iter().enumerate() {
            x[[t * batch + r, seq[t].index()]] = 1.0;
        }
    }
    x
}

/// Targets `lead` units ahead of each stacked input row.
fn stacked_targets(sequences: &[[ActivityType; N_UNITS]], steps: usize, lead: usize) -> Vec<usize> {
    (0..steps)
        .flat_map(|t| sequences.iter().map(move |seq| seq[t + lead].index()))
        .collect()
}

pub(crate) fn one_hot_rows(activities: &[ActivityType]) -> Array2<f64> {
    let mut x = Array2::zeros((activities.len(), N_ACTIVITIES));
    for (r, a) in activities.iter().enumerate() {
        x[[r, a.index()]] = 1.0;
    }
    x
}

fn check_lead(lead: usize) -> Result<usize> {
    if lead == 0 || lead >= N_UNITS {
        return Err(Error::Domain(format!(
            "horizon offset {lead} outside 1..{N_UNITS}"
        )));
    }
    Ok(N_UNITS - lead)
}

/// Feature rows and per-row class targets.
#[derive(Debug, Clone)]
pub struct FnnBatch {
    pub x: Array2<f64>,
    pub targets: Vec<usize>,
}

/// Input layer, one tanh hidden layer, softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnNet {
    pub hidden: Dense,
    pub output: Dense,
}

impl FnnNet {
    pub fn init(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let h = Dense::init(inputs, hidden, rng);
        let o = Dense::init(hidden, N_ACTIVITIES, rng);
        Self { hidden: h, output: o }
    }

    pub fn inputs(&self) -> usize {
        self.hidden.inputs()
    }

    /// Class probabilities, one row per input row.
    pub fn probabilities(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let a = self.hidden.forward(x)?.mapv(f64::tanh);
        Ok(crate::nn::softmax_rows(&self.output.forward_view(a.view())))
    }
}

impl Parameters for FnnNet {
    fn blocks(&self) -> Vec<(String, &Array2<f64>)> {
        let mut b = prefixed("hidden", self.hidden.blocks());
        b.extend(prefixed("output", self.output.blocks()));
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut b = self.hidden.blocks_mut();
        b.extend(self.output.blocks_mut());
        b
    }
}

impl Differentiable for FnnNet {
    type Batch = FnnBatch;

    fn loss(&self, batch: &FnnBatch) -> Result<f64> {
        let a = self.hidden.forward(&batch.x)?.mapv(f64::tanh);
        let logits = self.output.forward_view(a.view());
        Ok(softmax_ce_loss(&logits, &batch.targets) / batch.targets.len() as f64)
    }

    fn loss_and_gradient(&self, batch: &FnnBatch) -> Result<(f64, Self)> {
        let n = batch.targets.len() as f64;
        let a = self.hidden.forward(&batch.x)?.mapv(f64::tanh);
        let logits = self.output.forward_view(a.view());
        let (total, dlogits) = softmax_ce(&logits, &batch.targets, 1.0 / n);
        let mut grad = self.zeros_like();
        let da = self
            .output
            .backward(a.view(), dlogits.view(), &mut grad.output);
        let dz = da * a.mapv(|v| 1.0 - v * v);
        self.hidden
            .accumulate(batch.x.view(), dz.view(), &mut grad.hidden);
        Ok((total / n, grad))
    }
}

/// Whole sequences; the model predicts unit `t + lead` from units `0..=t`.
#[derive(Debug, Clone)]
pub struct SequenceBatch {
    pub sequences: Vec<[ActivityType; N_UNITS]>,
    pub lead: usize,
}

/// LSTM over one-hot activities with a softmax read-out of the hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmNet {
    pub cell: Lstm,
    pub output: Dense,
}

impl LstmNet {
    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        let cell = Lstm::init(N_ACTIVITIES, hidden, rng);
        let output = Dense::init(hidden, N_ACTIVITIES, rng);
        Self { cell, output }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden()
    }

    /// State after consuming `prefix` (equal-length rows), starting from zero.
    pub fn run(&self, prefixes: &[&[ActivityType]]) -> Result<LstmState> {
        let len = prefixes.first().map_or(0, |p| p.len());
        let mut state = LstmState::zeros(prefixes.len(), self.hidden());
        for t in 0..len {
            let column: Vec<ActivityType> = prefixes.iter().map(|p| p[t]).collect();
            state = self.cell.advance(&one_hot_rows(&column), &state)?;
        }
        Ok(state)
    }

    pub fn probabilities(&self, state: &LstmState) -> Array2<f64> {
        crate::nn::softmax_rows(&self.output.forward_view(state.h.view()))
    }
}

impl Parameters for LstmNet {
    fn blocks(&self) -> Vec<(String, &Array2<f64>)> {
        let mut b = prefixed("lstm", self.cell.blocks());
        b.extend(prefixed("output", self.output.blocks()));
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut b = self.cell.blocks_mut();
        b.extend(self.output.blocks_mut());
        b
    }
}

impl LstmNet {
    fn forward_batch(&self, batch: &SequenceBatch) -> Result<(LstmTrace, Array2<f64>, Vec<usize>)> {
        let steps = check_lead(batch.lead)?;
        let seqs = &batch.sequences;
        let trace = self
            .cell
            .forward_sequence(&stacked_inputs(seqs, steps), seqs.len())?;
        let logits = self.output.forward_view(trace.hidden_outputs().view());
        Ok((trace, logits, stacked_targets(seqs, steps, batch.lead)))
    }
}

impl Differentiable for LstmNet {
    type Batch = SequenceBatch;

    fn loss(&self, batch: &SequenceBatch) -> Result<f64> {
        let (_, logits, targets) = self.forward_batch(batch)?;
        Ok(softmax_ce_loss(&logits, &targets) / targets.len() as f64)
    }

    fn loss_and_gradient(&self, batch: &SequenceBatch) -> Result<(f64, Self)> {
        let (trace, logits, targets) = self.forward_batch(batch)?;
        let scale = 1.0 / targets.len() as f64;
        let (total, dlogits) = softmax_ce(&logits, &targets, scale);
        let mut grad = self.zeros_like();
        let dh = self
            .output
            .backward(trace.hidden_outputs().view(), dlogits.view(), &mut grad.output);
        self.cell.backward_sequence(&trace, &dh, &mut grad.cell);
        Ok((total * scale, grad))
    }
}

/// Static features with whole sequences for next-unit prediction.
#[derive(Debug, Clone)]
pub struct CombinedBatch {
    /// `[batch, 5]` feature rows.
    pub features: Array2<f64>,
    pub sequences: Vec<[ActivityType; N_UNITS]>,
}

/// Feed-forward branch over static features and LSTM branch over the
/// activity history, concatenated `[h_lstm, h_static]` before a softmax layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedNet {
    pub static_branch: Dense,
    pub cell: Lstm,
    pub fusion: Dense,
}

impl CombinedNet {
    pub fn init(features: usize, static_hidden: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let static_branch = Dense::init(features, static_hidden, rng);
        let cell = Lstm::init(N_ACTIVITIES, hidden, rng);
        let fusion = Dense::init(hidden + static_hidden, N_ACTIVITIES, rng);
        Self {
            static_branch,
            cell,
            fusion,
        }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden()
    }

    pub fn static_hidden(&self) -> usize {
        self.static_branch.outputs()
    }

    pub fn static_activations(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.static_branch.forward(features)?.mapv(f64::tanh))
    }

    pub fn fused(&self, h: &Array2<f64>, s: &Array2<f64>) -> Array2<f64> {
        let mut joined = Array2::zeros((h.nrows(), h.ncols() + s.ncols()));
        joined.slice_mut(s![.., ..h.ncols()]).assign(h);
        joined.slice_mut(s![.., h.ncols()..]).assign(s);
        joined
    }

    pub fn probabilities(&self, state: &LstmState, s: &Array2<f64>) -> Array2<f64> {
        let joined = self.fused(&state.h, s);
        crate::nn::softmax_rows(&self.fusion.forward_view(joined.view()))
    }
}

impl Parameters for CombinedNet {
    fn blocks(&self) -> Vec<(String, &Array2<f64>)> {
        let mut b = prefixed("static", self.static_branch.blocks());
        b.extend(prefixed("lstm", self.cell.blocks()));
        b.extend(prefixed("fusion", self.fusion.blocks()));
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut b = self.static_branch.blocks_mut();
        b.extend(self.cell.blocks_mut());
        b.extend(self.fusion.blocks_mut());
        b
    }
}

impl CombinedNet {
    /// Trace, static activations, stacked `[h_t, s]` fusion inputs, logits
    /// and targets.
    #[allow(clippy::type_complexity)]
    fn forward_batch(
        &self,
        batch: &CombinedBatch,
    ) -> Result<(LstmTrace, Array2<f64>, Array2<f64>, Array2<f64>, Vec<usize>)> {
        check_batch(batch)?;
        let seqs = &batch.sequences;
        let steps = N_UNITS - 1;
        let s = self.static_activations(&batch.features)?;
        let trace = self
            .cell
            .forward_sequence(&stacked_inputs(seqs, steps), seqs.len())?;
        let tiled = ndarray::concatenate(Axis(0), &vec![s.view(); steps]).expect("equal widths");
        let joined = self.fused(trace.hidden_outputs(), &tiled);
        let logits = self.fusion.forward_view(joined.view());
        Ok((trace, s, joined, logits, stacked_targets(seqs, steps, 1)))
    }
}

impl Differentiable for CombinedNet {
    type Batch = CombinedBatch;

    fn loss(&self, batch: &CombinedBatch) -> Result<f64> {
        let (_, _, _, logits, targets) = self.forward_batch(batch)?;
        Ok(softmax_ce_loss(&logits, &targets) / targets.len() as f64)
    }

    fn loss_and_gradient(&self, batch: &CombinedBatch) -> Result<(f64, Self)> {
        let (trace, s, joined, logits, targets) = self.forward_batch(batch)?;
        let scale = 1.0 / targets.len() as f64;
        let (total, dlogits) = softmax_ce(&logits, &targets, scale);
        let mut grad = self.zeros_like();
        let djoined = self
            .fusion
            .backward(joined.view(), dlogits.view(), &mut grad.fusion);
        let hidden = self.hidden();
        let dh = djoined.slice(s![.., ..hidden]).to_owned();
        self.cell.backward_sequence(&trace, &dh, &mut grad.cell);
        let mut ds = Array2::<f64>::zeros(s.dim());
        for block in djoined.slice(s![.., hidden..]).axis_chunks_iter(Axis(0), s.nrows()) {
            ds += &block;
        }
        let dz = ds * s.mapv(|v| 1.0 - v * v);
        self.static_branch
            .accumulate(batch.features.view(), dz.view(), &mut grad.static_branch);
        Ok((total * scale, grad))
    }
}

fn check_batch(batch: &CombinedBatch) -> Result<()> {
    if batch.features.nrows() != batch.sequences.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} sequences",
            batch.features.nrows(),
            batch.sequences.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sequences(rng: &mut ChaCha8Rng, n: usize) -> Vec<[ActivityType; N_UNITS]> {
        (0..n)
            .map(|_| {
                let mut s = [ActivityType::NotAtAirport; N_UNITS];
                let arrival = rng.random_range(0..N_UNITS);
                for u in s.iter_mut().skip(arrival) {
                    *u = ActivityType::ALL[rng.random_range(1..N_ACTIVITIES)];
                }
                s
            })
            .collect()
    }

    fn random_features(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 5), |(_, c)| {
            if c < 2 {
                rng.random::<f64>()
            } else {
                f64::from(rng.random_range(0..2u8))
            }
        })
    }

    #[test]
    fn fnn_gradients_match_finite_differences() {
        for seed in 1..=3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = FnnNet::init(5, 6, &mut rng);
            let batch = FnnBatch {
                x: random_features(&mut rng, 16),
                targets: (0..16).map(|_| rng.random_range(0..N_ACTIVITIES)).collect(),
            };
            let report = grad_check(&net, &batch, 1e-4).unwrap();
            assert!(report.passed(), "seed {seed}\n{report}");
        }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = LstmNet::init(5, &mut rng);
        for lead in [1, 3] {
            let batch = SequenceBatch {
                sequences: random_sequences(&mut rng, 3),
                lead,
            };
            let report = grad_check(&net, &batch, 1e-4).unwrap();
            assert!(report.passed(), "lead {lead}\n{report}");
        }
    }

    #[test]
    fn combined_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = CombinedNet::init(5, 6, 4, &mut rng);
        let batch = CombinedBatch {
            features: random_features(&mut rng, 3),
            sequences: random_sequences(&mut rng, 3),
        };
        let report = grad_check(&net, &batch, 1e-4).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn duplicated_batch_has_the_same_mean_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = LstmNet::init(6, &mut rng);
        let seqs = random_sequences(&mut rng, 4);
        let single = SequenceBatch {
            sequences: seqs.clone(),
            lead: 1,
        };
        let doubled = SequenceBatch {
            sequences: seqs.iter().chain(&seqs).copied().collect(),
            lead: 1,
        };
        let (l1, g1) = net.loss_and_gradient(&single).unwrap();
        let (l2, g2) = net.loss_and_gradient(&doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for ((_, a), (_, b)) in g1.blocks().iter().zip(g2.blocks()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn confident_correct_predictions_have_no_gradient() {
        // Output bias overwhelmingly favours class 4 and every target is 4.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = FnnNet::init(5, 6, &mut rng);
        net.output.w.fill(0.0);
        net.output.b.fill(-60.0);
        net.output.b[[0, 4]] = 60.0;
        let batch = FnnBatch {
            x: random_features(&mut rng, 8),
            targets: vec![4; 8],
        };
        let (loss, grad) = net.loss_and_gradient(&batch).unwrap();
        assert!(loss < 1e-12);
        for (_, b) in grad.blocks() {
            assert!(b.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn lead_out_of_range_is_rejected() {
        let net = LstmNet::init(2, &mut ChaCha8Rng::seed_from_u64(0));
        let batch = SequenceBatch {
            sequences: vec![[ActivityType::Waiting; N_UNITS]],
            lead: N_UNITS,
        };
        assert!(net.loss(&batch).is_err());
    }
}
