//! Trained models on disk: a `manifest` of `key=value` lines plus one
//! `paxnn/1` parameter file per network.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activity::{ActivityType, N_FEATURES, N_UNITS};
use crate::error::{Error, Result};
use crate::evaluation::{ConstantPerUnit, Predictor};
use crate::io::write_file;
use crate::models::combined::COMBINED_JOB;
use crate::models::fnn::unit_job;
use crate::models::lstm::lstm_job;
use crate::models::{
    CombinedModel, CombinedNet, DirectLstmSet, FnnInputs, FnnNet, FnnSet, LstmNet, LstmNextStep,
    TrainConfig,
};
use crate::nn::Parameters;
use crate::seed::{derive_seed, sha256_hex};

pub const MANIFEST: &str = "manifest";
pub const BUNDLE_FORMAT: &str = "paxnn-bundle/1";
pub const ARCHITECTURES: [&str; 5] = ["fnn", "lstm", "direct", "combined", "majority"];

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Fnn(FnnSet),
    Lstm(LstmNextStep),
    Direct(DirectLstmSet),
    Combined(CombinedModel),
    Majority(ConstantPerUnit),
}

impl Model {
    pub fn architecture(&self) -> &'static str {
        match self {
            Model::Fnn(_) => "fnn",
            Model::Lstm(_) => "lstm",
            Model::Direct(_) => "direct",
            Model::Combined(_) => "combined",
            Model::Majority(_) => "majority",
        }
    }

    /// Named predictors for evaluation; a direct set yields one per member.
    pub fn predictors(&self) -> Vec<(String, &dyn Predictor)> {
        match self {
            Model::Fnn(m) => vec![("fnn".into(), m as &dyn Predictor)],
            Model::Lstm(m) => vec![(format!("lstm_h{}", m.lead), m as &dyn Predictor)],
            Model::Direct(set) => set
                .members()
                .iter()
                .map(|m| (format!("direct_h{}", m.lead), m as &dyn Predictor))
                .collect(),
            Model::Combined(m) => vec![("combined".into(), m as &dyn Predictor)],
            Model::Majority(m) => vec![("majority".into(), m as &dyn Predictor)],
        }
    }

    /// Jobs whose derived seeds initialised the networks.
    fn jobs(&self) -> Vec<String> {
        match self {
            Model::Fnn(_) => (0..N_UNITS).map(unit_job).collect(),
            Model::Lstm(m) => vec![lstm_job(m.lead)],
            Model::Direct(set) => set.members().iter().map(|m| lstm_job(m.lead)).collect(),
            Model::Combined(_) => vec![COMBINED_JOB.into()],
            Model::Majority(_) => vec![],
        }
    }

    /// Parameter files as (name, contents).
    fn files(&self) -> Vec<(String, String)> {
        match self {
            Model::Fnn(set) => set
                .nets
                .iter()
                .enumerate()
                .map(|(k, n)| (format!("unit-{k:02}.paxnn"), n.to_paxnn()))
                .collect(),
            Model::Lstm(m) => vec![(format!("lstm-h{}.paxnn", m.lead), m.net.to_paxnn())],
            Model::Direct(set) => set
                .members()
                .iter()
                .map(|m| (format!("lstm-h{}.paxnn", m.lead), m.net.to_paxnn()))
                .collect(),
            Model::Combined(m) => vec![("combined.paxnn".into(), m.net.to_paxnn())],
            Model::Majority(_) => vec![],
        }
    }

    fn shape_entries(&self) -> Vec<(String, String)> {
        let kv = |k: &str, v: String| (k.to_string(), v);
        match self {
            Model::Fnn(set) => vec![
                kv("inputs", inputs_token(&set.inputs)),
                kv("fnn_hidden", set.nets[0].hidden.outputs().to_string()),
            ],
            Model::Lstm(m) => vec![
                kv("lead", m.lead.to_string()),
                kv("lstm_hidden", m.net.hidden().to_string()),
            ],
            Model::Direct(set) => vec![
                kv("max_lead", set.max_lead().to_string()),
                kv("lstm_hidden", set.members()[0].net.hidden().to_string()),
            ],
            Model::Combined(m) => vec![
                kv("fnn_hidden", m.net.static_hidden().to_string()),
                kv("lstm_hidden", m.net.hidden().to_string()),
            ],
            Model::Majority(m) => vec![kv(
                "units",
                m.units.iter().map(|a| a.code().to_string()).collect::<Vec<_>>().join(" "),
            )],
        }
    }

    fn final_losses(&self) -> Vec<(String, f64)> {
        let last = |h: &[f64]| h.last().copied();
        match self {
            Model::Lstm(m) => last(&m.history).map(|l| vec![(lstm_job(m.lead), l)]).unwrap_or_default(),
            Model::Direct(set) => set
                .members()
                .iter()
                .filter_map(|m| last(&m.history).map(|l| (lstm_job(m.lead), l)))
                .collect(),
            Model::Combined(m) => last(&m.history).map(|l| vec![(COMBINED_JOB.to_string(), l)]).unwrap_or_default(),
            _ => vec![],
        }
    }
}

fn inputs_token(inputs: &FnnInputs) -> String {
    match inputs {
        FnnInputs::Features(cols) => format!(
            "features:{}",
            cols.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
        ),
        FnnInputs::Noise(seed) => format!("noise:{seed}"),
    }
}

fn parse_inputs(token: &str) -> Result<FnnInputs> {
    let bad = || Error::Validation(format!("bad inputs entry `{token}`"));
    if let Some(seed) = token.strip_prefix("noise:") {
        return Ok(FnnInputs::Noise(seed.parse().map_err(|_| bad())?));
    }
    let cols = token.strip_prefix("features:").ok_or_else(bad)?;
    let cols = cols
        .split_whitespace()
        .map(|c| c.parse::<usize>().ok().filter(|&c| c < N_FEATURES))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(bad)?;
    Ok(FnnInputs::Features(cols))
}

/// A model plus the provenance written next to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: Model,
    /// Content hash of the training split.
    pub data_hash: String,
    /// Extra provenance (config echo and the like), in order.
    pub provenance: Vec<(String, String)>,
}

impl ModelBundle {
    pub fn new(model: Model, data_hash: impl Into<String>) -> Self {
        Self {
            model,
            data_hash: data_hash.into(),
            provenance: Vec::new(),
        }
    }

    pub fn manifest(&self, config: &TrainConfig) -> String {
        let files = self.model.files();
        let mut lines = vec![
            format!("format={BUNDLE_FORMAT}"),
            format!("architecture={}", self.model.architecture()),
            format!("data_hash={}", self.data_hash),
        ];
        lines.extend(self.model.shape_entries().into_iter().map(|(k, v)| format!("{k}={v}")));
        lines.push(format!("master_seed={}", config.seed));
        for job in self.model.jobs() {
            lines.push(format!("seed.{job}={}", derive_seed(config.seed, &job)));
        }
        for (job, loss) in self.model.final_losses() {
            lines.push(format!("final_loss.{job}={loss}"));
        }
        for (name, text) in &files {
            lines.push(format!("file.{name}={}", sha256_hex(text.as_bytes())));
        }
        lines.extend(self.provenance.iter().map(|(k, v)| format!("{k}={v}")));
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn save(&self, dir: &Path, config: &TrainConfig) -> Result<()> {
        for (name, text) in self.model.files() {
            write_file(&dir.join(name), &text)?;
        }
        write_file(&dir.join(MANIFEST), &self.manifest(config))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("{}: bad line `{line}`", path.display())))?;
            entries.push((k.to_string(), v.to_string()));
        }
        let get = |key: &str| -> Result<&str> {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Validation(format!("{}: missing `{key}`", path.display())))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Validation(format!("{}: `{key}` is not a count", path.display())))
        };
        if get("format")? != BUNDLE_FORMAT {
            return Err(Error::Validation(format!(
                "{}: not a {BUNDLE_FORMAT} manifest",
                path.display()
            )));
        }
        let read = |name: &str| -> Result<String> {
            let p = dir.join(name);
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let want = get(&format!("file.{name}"))?;
            if sha256_hex(text.as_bytes()) != want {
                return Err(Error::Validation(format!("{}: content hash mismatch", p.display())));
            }
            Ok(text)
        };
        // Only the final loss of a training run is kept on disk.
        let history = |job: &str| -> Result<Vec<f64>> {
            match entries.iter().find(|(k, _)| k.strip_prefix("final_loss.") == Some(job)) {
                Some((k, v)) => Ok(vec![v.parse().map_err(|_| {
                    Error::Validation(format!("{}: `{k}` is not a number", path.display()))
                })?]),
                None => Ok(Vec::new()),
            }
        };
        // Initial values are overwritten by the files.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let load_lstm = |lead: usize, hidden: usize, rng: &mut ChaCha8Rng| -> Result<LstmNextStep> {
            let mut net = LstmNet::init(hidden, rng);
            net.load_paxnn(&read(&format!("lstm-h{lead}.paxnn"))?)?;
            let mut m = LstmNextStep::from_net(net, lead)?;
            m.history = history(&lstm_job(lead))?;
            Ok(m)
        };
        let architecture = get("architecture")?;
        let model = match architecture {
            "fnn" => {
                let inputs = parse_inputs(get("inputs")?)?;
                let hidden = num("fnn_hidden")?;
                let nets = (0..N_UNITS)
                    .map(|k| {
                        let mut net = FnnNet::init(inputs.width(), hidden, &mut rng);
                        net.load_paxnn(&read(&format!("unit-{k:02}.paxnn"))?)?;
                        Ok(net)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Model::Fnn(FnnSet { inputs, nets })
            }
            "lstm" => Model::Lstm(load_lstm(num("lead")?, num("lstm_hidden")?, &mut rng)?),
            "direct" => {
                let hidden = num("lstm_hidden")?;
                let members = (1..=num("max_lead")?)
                    .map(|h| load_lstm(h, hidden, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                Model::Direct(DirectLstmSet::new(members)?)
            }
            "combined" => {
                let mut net = CombinedNet::init(N_FEATURES, num("fnn_hidden")?, num("lstm_hidden")?, &mut rng);
                net.load_paxnn(&read("combined.paxnn")?)?;
                Model::Combined(CombinedModel {
                    net,
                    history: history(COMBINED_JOB)?,
                })
            }
            "majority" => {
                let codes = get("units")?
                    .split_whitespace()
                    .map(|c| c.parse::<u8>().ok().and_then(|c| ActivityType::from_code(c).ok()))
                    .collect::<Option<Vec<_>>>()
                    .filter(|v| v.len() == N_UNITS)
                    .ok_or_else(|| Error::Validation(format!("{}: bad `units`", path.display())))?;
                Model::Majority(ConstantPerUnit {
                    name: "majority".into(),
                    units: codes.try_into().expect("length checked"),
                })
            }
            other => {
                return Err(Error::UnknownArchitecture {
                    given: other.into(),
                    valid: ARCHITECTURES.to_vec(),
                })
            }
        };
        let known = |k: &str| {
            ["format", "architecture", "data_hash", "inputs", "fnn_hidden", "lstm_hidden", "lead", "max_lead", "units", "master_seed"]
                .contains(&k)
                || ["seed.", "final_loss.", "file."].iter().any(|p| k.starts_with(p))
        };
        Ok(Self {
            data_hash: get("data_hash")?.to_string(),
            provenance: entries.iter().filter(|(k, _)| !known(k)).cloned().collect(),
            model,
        })
    }
}

/// Probability rows of a loaded model must still be distributions; used as a
/// load-time sanity check in tests.
#[cfg(test)]
fn is_distribution(p: &[f64]) -> bool {
    (p.iter().sum::<f64>() - 1.0).abs() < 1e-9 && p.iter().all(|&v| v >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::PassengerFeatures;
    use crate::models::baseline::majority_baseline;
    use crate::models::fnn::train_fnn_set_with;

    fn tiny() -> TrainConfig {
        TrainConfig {
            fnn_epochs: 1,
            lstm_epochs: 1,
            lstm_hidden: 4,
            ..TrainConfig::default()
        }
    }

    fn round_trip(model: Model) -> ModelBundle {
        let dir = tempfile::tempdir().unwrap();
        let mut b = ModelBundle::new(model, "abc");
        b.provenance.push(("config.train.seed".into(), "42".into()));
        b.save(dir.path(), &tiny()).unwrap();
        let loaded = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(loaded.manifest(&tiny()), b.manifest(&tiny()));
        loaded
    }

    #[test]
    fn every_architecture_round_trips() {
        let ds = crate::dataset::fixtures::small(40);
        let cfg = tiny();
        let fnn = train_fnn_set_with(&ds, FnnInputs::without(2), &cfg).unwrap();
        assert_eq!(round_trip(Model::Fnn(fnn.clone())).model, Model::Fnn(fnn));
        let noise = train_fnn_set_with(&ds, FnnInputs::Noise(9), &cfg).unwrap();
        assert_eq!(round_trip(Model::Fnn(noise.clone())).model, Model::Fnn(noise));

        let direct = crate::models::train_direct_set(&ds, 3, &cfg).unwrap();
        let mut loaded = round_trip(Model::Direct(direct.clone()));
        if let Model::Direct(set) = &mut loaded.model {
            assert_eq!(set.members().len(), 3);
            for (a, b) in set.members().iter().zip(direct.members()) {
                assert_eq!(a.net, b.net);
            }
        } else {
            panic!("wrong architecture");
        }

        let comb = crate::models::train_combined(&ds, &cfg).unwrap();
        let f = PassengerFeatures::new(0.5, 0.5, true, true, false).unwrap();
        let prefix = [ActivityType::NotAtAirport; 3];
        if let Model::Combined(c) = round_trip(Model::Combined(comb.clone())).model {
            let p = c.predict_combined(&f, &prefix).unwrap();
            assert!(is_distribution(&p));
            assert_eq!(p, comb.predict_combined(&f, &prefix).unwrap());
        } else {
            panic!("wrong architecture");
        }

        let maj = majority_baseline(&ds).unwrap();
        assert_eq!(round_trip(Model::Majority(maj.clone())).model, Model::Majority(maj));
    }

    #[test]
    fn tampered_file_is_refused() {
        let ds = crate::dataset::fixtures::small(20);
        let m = Model::Lstm(crate::models::train_lstm(&ds, 2, &tiny()).unwrap());
        let dir = tempfile::tempdir().unwrap();
        ModelBundle::new(m, "h").save(dir.path(), &tiny()).unwrap();
        let p = dir.path().join("lstm-h2.paxnn");
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, text.replacen('0', "1", 1)).unwrap();
        assert!(ModelBundle::load(dir.path()).is_err());

        let manifest = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&manifest).unwrap();
        fs::write(&manifest, text.replace("architecture=lstm", "architecture=gru")).unwrap();
        assert!(matches!(
            ModelBundle::load(dir.path()),
            Err(Error::UnknownArchitecture { .. })
        ));
    }
}
