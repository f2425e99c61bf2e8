//! Per-unit FNN set, next-step LSTM, combined network and baselines.

pub mod baseline;
pub mod combined;
pub mod fnn;
pub mod lstm;
pub mod nets;
pub mod train;

pub use baseline::{majority_baseline, random_input_benchmark};
pub use combined::{train_combined, CombinedModel};
pub use fnn::{train_fnn_set, FnnInputs, FnnSet};
pub use lstm::{train_direct_set, train_lstm, DirectLstmSet, LstmNextStep, RecursiveForecaster};
pub use nets::{CombinedBatch, CombinedNet, FnnBatch, FnnNet, LstmNet, SequenceBatch};
pub use train::{LossHistory, TrainConfig};
