//! Run configuration: a TOML file with `[generator]`, `[ingest]`, `[train]`,
//! `[eval]` and `[io]` sections. Every key has a default; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activity::CriticalPeriod;
use crate::bundle::ARCHITECTURES;
use crate::error::{Error, Result};
use crate::models::TrainConfig;
use crate::synthgen::GeneratorParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub gap_threshold_units: u32,
    pub allow_unmapped: bool,
    /// Input files; unset means the generator's files under `<out>/data`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stays: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flights: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub area_map: Option<PathBuf>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            gap_threshold_units: 2,
            allow_unmapped: false,
            stays: None,
            flights: None,
            area_map: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub architecture: String,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub fnn_epochs: usize,
    pub lstm_epochs: usize,
    pub fnn_hidden: usize,
    pub lstm_hidden: usize,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            architecture: "lstm".into(),
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            batch_size: t.batch_size,
            fnn_epochs: t.fnn_epochs,
            lstm_epochs: t.lstm_epochs,
            fnn_hidden: t.fnn_hidden,
            lstm_hidden: t.lstm_hidden,
            seed: t.seed,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            fnn_epochs: self.fnn_epochs,
            lstm_epochs: self.lstm_epochs,
            fnn_hidden: self.fnn_hidden,
            lstm_hidden: self.lstm_hidden,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub train_fraction: f64,
    /// Critical period as minutes before departure, both ends inclusive.
    pub critical_lo_minutes: u32,
    pub critical_hi_minutes: u32,
    /// Largest direct-strategy horizon, in units.
    pub max_horizon: usize,
    /// FNN hidden sizes swept by `ablate`; empty skips the sweep.
    pub hidden_sizes: Vec<usize>,
    /// Population used by `compare`: `default` (the `[generator]` section)
    /// or `long_dependency`.
    pub compare_population: String,
    pub compare_passengers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            critical_lo_minutes: 30,
            critical_hi_minutes: 100,
            max_horizon: 6,
            hidden_sizes: vec![2, 4, 6, 8, 12],
            compare_population: "long_dependency".into(),
            compare_passengers: 2000,
        }
    }
}

impl EvalConfig {
    pub fn critical(&self) -> Result<CriticalPeriod> {
        CriticalPeriod::from_minutes(self.critical_lo_minutes, self.critical_hi_minutes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub out_dir: PathBuf,
    /// Sequences CSV to model instead of the generated population.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorParams,
    pub ingest: IngestConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
    pub io: IoConfig,
}

pub const COMPARE_POPULATIONS: [&str; 2] = ["default", "long_dependency"];

/// Every key with a one-line description, in file order.
pub const KEY_DOCS: &[(&str, &str)] = &[
    ("generator.n_passengers", "population size"),
    ("generator.seed", "generator seed"),
    ("generator.earliness_mean", "mean minutes between arrival and departure"),
    ("generator.earliness_std", "its standard deviation; samples clipped to [15, 180]"),
    ("generator.arrival_hour_range", "[min, max] hour of day of arrival"),
    ("generator.p_short_range", "share of short-range destinations"),
    ("generator.p_traditional", "share of traditional carriers"),
    ("generator.p_brand", "share of brand-A devices"),
    ("generator.checkin_mean", "check-in minutes, mean"),
    ("generator.checkin_std", "check-in minutes, standard deviation"),
    ("generator.security_trigger_mean", "minutes before departure of the move to security, mean"),
    ("generator.security_trigger_std", "same, standard deviation"),
    ("generator.security_mean", "security minutes, mean"),
    ("generator.security_std", "security minutes, standard deviation"),
    ("generator.band_edges", "minutes-to-deadline edges of the choice bands"),
    ("generator.transition_weights", "choice weights per band over Mandatory, Eating, Shopping, Other"),
    ("generator.dwell_continue", "per-unit probability of staying in each choice"),
    ("generator.repeat_penalty", "weight multiplier for activities already done"),
    ("generator.destination_effect", "log-odds offsets for short-range passengers"),
    ("generator.carrier_effect", "log-odds offsets for traditional-carrier passengers"),
    ("generator.brand_effect", "log-odds offsets for brand-A devices"),
    ("ingest.gap_threshold_units", "longest allowed hole between stays, in 5-minute units"),
    ("ingest.allow_unmapped", "read unknown areas as Other instead of failing"),
    ("ingest.stays", "stays CSV (unset: <out>/data/stays.csv)"),
    ("ingest.flights", "flights CSV (unset: <out>/data/flights.csv)"),
    ("ingest.area_map", "area map CSV (unset: <out>/data/areas.csv)"),
    ("train.architecture", "model trained by `train`: fnn, lstm, direct, combined or majority"),
    ("train.learning_rate", "SGDM step size"),
    ("train.momentum", "SGDM momentum"),
    ("train.batch_size", "mini-batch size"),
    ("train.fnn_epochs", "epochs per FNN"),
    ("train.lstm_epochs", "epochs per LSTM and for the combined network"),
    ("train.fnn_hidden", "FNN hidden size"),
    ("train.lstm_hidden", "LSTM hidden size"),
    ("train.seed", "master seed of splits, initialisation and shuffling"),
    ("eval.train_fraction", "share of passengers in the training split"),
    ("eval.critical_lo_minutes", "critical period, latest minutes before departure"),
    ("eval.critical_hi_minutes", "critical period, earliest minutes before departure"),
    ("eval.max_horizon", "largest direct-strategy horizon in units"),
    ("eval.hidden_sizes", "FNN hidden sizes swept by `ablate` (empty: no sweep)"),
    ("eval.compare_population", "population for `compare`: default or long_dependency"),
    ("eval.compare_passengers", "its size"),
    ("io.out_dir", "output directory"),
    ("io.dataset", "sequences CSV to model instead of generating (unset: generate)"),
];

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.train.train_config().validate()?;
        if !ARCHITECTURES.contains(&self.train.architecture.as_str()) {
            return Err(Error::UnknownArchitecture {
                given: self.train.architecture.clone(),
                valid: ARCHITECTURES.to_vec(),
            });
        }
        let e = &self.eval;
        if !(e.train_fraction > 0.0 && e.train_fraction < 1.0) {
            return Err(Error::Config(format!("eval.train_fraction {} outside (0, 1)", e.train_fraction)));
        }
        e.critical()?;
        if e.max_horizon == 0 || e.max_horizon >= crate::activity::N_UNITS {
            return Err(Error::Config(format!("eval.max_horizon {} outside 1..36", e.max_horizon)));
        }
        if e.hidden_sizes.contains(&0) {
            return Err(Error::Config("eval.hidden_sizes must be positive".into()));
        }
        if !COMPARE_POPULATIONS.contains(&e.compare_population.as_str()) {
            return Err(Error::Config(format!(
                "eval.compare_population `{}`; valid: {}",
                e.compare_population,
                COMPARE_POPULATIONS.join(", ")
            )));
        }
        Ok(())
    }

    /// Sets both the generator and the training master seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.generator.seed = seed;
        self.train.seed = seed;
    }

    /// Parameters of the population used by `compare`.
    pub fn compare_params(&self) -> GeneratorParams {
        let base = match self.eval.compare_population.as_str() {
            "long_dependency" => GeneratorParams::long_dependency(),
            _ => self.generator.clone(),
        };
        GeneratorParams {
            n_passengers: self.eval.compare_passengers,
            seed: self.generator.seed,
            ..base
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// `config.<section>.<key>=<value>` entries for every modelling key;
    /// paths under `[io]` and `[ingest]` are left out so outputs do not
    /// depend on where they were written.
    pub fn echo(&self) -> Vec<(String, String)> {
        let value = toml::Value::try_from(self).expect("config serialises");
        let mut flat = Vec::new();
        flatten("", &value, &mut flat);
        flat.into_iter()
            .filter(|(k, _)| !k.starts_with("io.") && !matches!(k.as_str(), "ingest.stays" | "ingest.flights" | "ingest.area_map"))
            .map(|(k, v)| (format!("config.{k}"), v))
            .collect()
    }

    /// Help text listing every key with its default.
    pub fn keys_help() -> String {
        let value = toml::Value::try_from(Self::default()).expect("config serialises");
        let mut flat = Vec::new();
        flatten("", &value, &mut flat);
        let mut out = String::from("Config keys (TOML, `[section]` then `key = value`) and defaults:\n");
        for (key, doc) in KEY_DOCS {
            let default = flat
                .iter()
                .find(|(k, _)| k == key)
                .map_or_else(|| "unset".to_string(), |(_, v)| v.clone());
            out.push_str(&format!("  {key} = {default}\n      {doc}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::parse("").unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("[train]\nlearning_rat = 0.1\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[plot]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_architecture_lists_the_valid_ones() {
        let err = RunConfig::parse("[train]\narchitecture = \"gru\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(err.is_usage());
        for name in ARCHITECTURES {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn every_key_is_documented() {
        let mut c = RunConfig::default();
        c.ingest.stays = Some("s".into());
        c.ingest.flights = Some("f".into());
        c.ingest.area_map = Some("a".into());
        c.io.dataset = Some("d".into());
        let mut flat = Vec::new();
        flatten("", &toml::Value::try_from(&c).unwrap(), &mut flat);
        let documented: Vec<&str> = KEY_DOCS.iter().map(|(k, _)| *k).collect();
        let mut keys: Vec<&str> = flat.iter().map(|(k, _)| k.as_str()).collect();
        keys.sort_unstable();
        let mut sorted = documented.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
        let help = RunConfig::keys_help();
        assert!(help.contains("train.lstm_hidden = 200"));
        assert!(help.contains("io.dataset = unset"));
    }

    #[test]
    fn echo_skips_paths_and_seed_override_hits_both_seeds() {
        let mut c = RunConfig::default();
        c.io.out_dir = "/elsewhere".into();
        assert_eq!(c.echo(), RunConfig::default().echo());
        assert!(c.echo().iter().any(|(k, v)| k == "config.train.lstm_hidden" && v == "200"));
        c.override_seed(7);
        assert_eq!((c.generator.seed, c.train.seed), (7, 7));
        assert_eq!(c.compare_params().seed, 7);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::parse("[eval]\ntrain_fraction = 1.0\n").is_err());
        assert!(RunConfig::parse("[eval]\ncompare_population = \"x\"\n").is_err());
        assert!(RunConfig::parse("[eval]\ncritical_lo_minutes = 200\n").is_err());
        assert!(RunConfig::parse("[generator]\nearliness_mean = 200.0\n").is_err());
        assert!(RunConfig::parse("[train]\nbatch_size = 0\n").is_err());
    }
}
