//! Airport passenger activity-choice modelling from WiFi stay traces.

pub mod activity;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod ingestion;
pub mod io;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod synthgen;

pub use error::{Error, Result};
