//! Mini-batch SGDM training shared by every architecture.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Differentiable, Sgdm};

/// Optimizer and size settings for every trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub fnn_epochs: usize,
    pub lstm_epochs: usize,
    pub fnn_hidden: usize,
    pub lstm_hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            fnn_epochs: 30,
            lstm_epochs: 60,
            fnn_hidden: 6,
            lstm_hidden: 200,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if self.fnn_hidden == 0 || self.lstm_hidden == 0 {
            return Err(Error::Validation("hidden sizes must be at least 1".into()));
        }
        // Reuses the optimizer's own checks on the learning rate and momentum.
        Sgdm::new(&crate::nn::Dense::zeros(0, 0), self.learning_rate, self.momentum)?;
        Ok(())
    }
}

/// Mean training loss per epoch.
pub type LossHistory = Vec<f64>;

/// Runs `epochs` passes over `n` examples in freshly shuffled mini-batches.
/// `batch_of` assembles a batch from example indices.
pub(crate) fn fit<M>(
    model: &mut M,
    n: usize,
    epochs: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    batch_of: impl Fn(&[usize]) -> M::Batch,
) -> Result<LossHistory>
where
    M: Differentiable,
    M::Batch: Sized,
{
    if n == 0 {
        return Err(Error::Validation("empty training split".into()));
    }
    config.validate()?;
    let mut opt = Sgdm::new(model, config.learning_rate, config.momentum)?;
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = batch_of(chunk);
            let (loss, grad) = model.loss_and_gradient(&batch)?;
            opt.step(model, &grad).map_err(|e| match e {
                Error::Training(msg) => Error::Training(format!("epoch {epoch}: {msg}")),
                other => other,
            })?;
            total += loss * chunk.len() as f64;
        }
        history.push(total / n as f64);
        log::debug!("epoch {epoch}: loss {:.6}", total / n as f64);
    }
    Ok(history)
}
