//! The commands behind the CLI. Every command writes into a staging
//! directory inside the output directory and moves its files into place only
//! once everything succeeded; on failure the staging directory is removed.

use std::fs;
use std::path::{Path, PathBuf};

use crate::bundle::{Model, ModelBundle, ARCHITECTURES, MANIFEST};
use crate::config::RunConfig;
use crate::dataset::{split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::report::metadata_lines;
use crate::evaluation::svg::render_curves;
use crate::evaluation::{ablation_study, misclassification_curve, strategy_comparison, EvaluationReport};
use crate::ingestion::{
    flights_csv, ingest_files, stays_csv, DiscardRule,
};
use crate::io::write_file;
use crate::models::fnn::{hidden_size_sweep, select_hidden_size};
use crate::models::{
    majority_baseline, train_combined, train_direct_set, train_fnn_set, train_lstm,
};
use crate::seed::sha256_hex;
use crate::synthgen::{generate_population, generate_traces, synthetic_area_map};

pub const STAYS: &str = "data/stays.csv";
pub const FLIGHTS: &str = "data/flights.csv";
pub const AREAS: &str = "data/areas.csv";
pub const SEQUENCES: &str = "data/sequences.csv";
pub const INGESTED: &str = "data/ingested.csv";
pub const DISCARDS: &str = "data/discards.csv";
pub const COMPARE_BUNDLE: &str = "models/compare";

/// Files written by one command, staged until [`Outputs::commit`].
pub struct Outputs {
    out: PathBuf,
    staging: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn begin(out: &Path) -> Result<Self> {
        let staging = out.join(format!(".staging-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        Ok(Self {
            out: out.to_path_buf(),
            staging,
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        write_file(&self.staging.join(rel), contents)?;
        if !self.written.iter().any(|w| w == rel) {
            self.written.push(rel.to_string());
        }
        Ok(())
    }

    /// Staging directory for `rel`, for writers that produce several files.
    pub fn stage_dir(&mut self, rel: &str, files: &[String]) -> PathBuf {
        for f in files {
            let r = format!("{rel}/{f}");
            if !self.written.contains(&r) {
                self.written.push(r);
            }
        }
        self.staging.join(rel)
    }

    /// Where `rel` currently lives: staged in this command, or already in
    /// the output directory.
    pub fn existing(&self, rel: &str) -> PathBuf {
        let staged = self.staging.join(rel);
        if staged.exists() {
            staged
        } else {
            self.out.join(rel)
        }
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        let mut moved = Vec::new();
        for rel in &self.written {
            let (from, to) = (self.staging.join(rel), self.out.join(rel));
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
            moved.push(to);
        }
        fs::remove_dir_all(&self.staging).map_err(|e| Error::io(&self.staging, e))?;
        Ok(moved)
    }

    pub fn abandon(self) {
        let _ = fs::remove_dir_all(&self.staging);
    }
}

/// Runs `body` against fresh staged outputs, committing on success.
pub fn staged<T>(out: &Path, body: impl FnOnce(&mut Outputs) -> Result<T>) -> Result<T> {
    let mut outputs = Outputs::begin(out)?;
    match body(&mut outputs) {
        Ok(v) => {
            outputs.commit()?;
            Ok(v)
        }
        Err(e) => {
            outputs.abandon();
            Err(e)
        }
    }
}

fn comment_block(entries: &[(String, String)]) -> String {
    metadata_lines(entries)
}

/// Config echo plus the hash of the command's input.
fn provenance(config: &RunConfig, input_hash: &str) -> Vec<(String, String)> {
    let mut p = vec![("input_hash".to_string(), input_hash.to_string())];
    p.extend(config.echo());
    p
}

fn config_hash(config: &RunConfig) -> String {
    let text: String = config.echo().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    sha256_hex(text.as_bytes())
}

/// The modelling population: `[io] dataset` if set, else generated.
pub fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    match &config.io.dataset {
        Some(path) => Dataset::read_csv(path),
        None => generate_population(&config.generator),
    }
}

pub fn split(config: &RunConfig, ds: &Dataset) -> Result<(Dataset, Dataset)> {
    split_dataset(ds, config.eval.train_fraction, config.train.seed)
}

pub fn generate(config: &RunConfig, outs: &mut Outputs) -> Result<()> {
    let traces = generate_traces(&config.generator)?;
    let stays: Vec<_> = traces.iter().flat_map(|t| t.stays.iter().cloned()).collect();
    let flights: Vec<_> = traces.iter().map(|t| t.flight.clone()).collect();
    let footer = comment_block(&provenance(config, &config_hash(config)));
    outs.write(STAYS, &(stays_csv(&stays) + &footer))?;
    outs.write(FLIGHTS, &(flights_csv(&flights) + &footer))?;
    outs.write(AREAS, &(synthetic_area_map().to_csv() + &footer))?;
    let ds = generate_population(&config.generator)?;
    outs.write(SEQUENCES, &(ds.to_csv() + &footer))?;
    log::info!("generated {} passengers, {} stays", ds.len(), stays.len());
    Ok(())
}

pub fn ingest(config: &RunConfig, outs: &mut Outputs) -> Result<Dataset> {
    let pick = |set: &Option<PathBuf>, rel: &str| set.clone().unwrap_or_else(|| outs.existing(rel));
    let (stays, flights, areas) = (
        pick(&config.ingest.stays, STAYS),
        pick(&config.ingest.flights, FLIGHTS),
        pick(&config.ingest.area_map, AREAS),
    );
    let mut hashes = Vec::new();
    for p in [&stays, &flights, &areas] {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        hashes.push(sha256_hex(&bytes));
    }
    let outcome = ingest_files(
        &stays,
        &flights,
        &areas,
        config.ingest.gap_threshold_units,
        config.ingest.allow_unmapped,
    )?;
    let input_hash = sha256_hex(hashes.join(",").as_bytes());
    let footer = comment_block(&provenance(config, &input_hash));
    outs.write(INGESTED, &(outcome.dataset.to_csv() + &footer))?;
    outs.write(DISCARDS, &(outcome.discards.to_csv() + &footer))?;
    log::info!(
        "kept {} devices; discarded {} (i: {}, ii: {}, iii: {})",
        outcome.dataset.len(),
        outcome.discards.entries.len(),
        outcome.discards.count(DiscardRule::NotTrackedToGate),
        outcome.discards.count(DiscardRule::NotContinuous),
        outcome.discards.count(DiscardRule::StartedAfterSecurity)
    );
    Ok(outcome.dataset)
}

pub fn bundle_dir(architecture: &str) -> String {
    format!("models/{architecture}")
}

fn save_bundle(config: &RunConfig, outs: &mut Outputs, rel: &str, bundle: &ModelBundle) -> Result<()> {
    let tc = config.train.train_config();
    // Stage the files first so the manifest lists what was written.
    let dir = outs.stage_dir(rel, &[]);
    bundle.save(&dir, &tc)?;
    let mut names: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    outs.stage_dir(rel, &names);
    Ok(())
}

pub fn train(config: &RunConfig, outs: &mut Outputs, ds: &Dataset, architecture: &str) -> Result<ModelBundle> {
    let (train_split, _) = split(config, ds)?;
    let tc = config.train.train_config();
    let model = match architecture {
        "fnn" => Model::Fnn(train_fnn_set(&train_split, &tc)?),
        "lstm" => Model::Lstm(train_lstm(&train_split, 1, &tc)?),
        "direct" => Model::Direct(train_direct_set(&train_split, config.eval.max_horizon, &tc)?),
        "combined" => Model::Combined(train_combined(&train_split, &tc)?),
        "majority" => Model::Majority(majority_baseline(&train_split)?),
        other => {
            return Err(Error::UnknownArchitecture {
                given: other.into(),
                valid: ARCHITECTURES.to_vec(),
            })
        }
    };
    let mut bundle = ModelBundle::new(model, train_split.content_hash());
    bundle.provenance = provenance(config, &ds.content_hash());
    save_bundle(config, outs, &bundle_dir(architecture), &bundle)?;
    log::info!("trained {architecture} on {} passengers", train_split.len());
    Ok(bundle)
}

fn report_metadata(
    report: EvaluationReport,
    config: &RunConfig,
    test: &Dataset,
    bundle: Option<&ModelBundle>,
) -> Result<EvaluationReport> {
    let mut r = report.with_metadata("test_hash", test.content_hash())?;
    if let Some(b) = bundle {
        r = r.with_metadata("train_hash", b.data_hash.clone())?;
        r = r.with_metadata(
            "bundle_hash",
            sha256_hex(b.manifest(&config.train.train_config()).as_bytes()),
        )?;
    }
    for (k, v) in config.echo() {
        r = r.with_metadata(k, v)?;
    }
    Ok(r)
}

/// Bundle directories directly under `<out>/models`, sorted.
pub fn find_bundles(outs: &Outputs) -> Result<Vec<PathBuf>> {
    let root = outs.existing("models");
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&root)
        .map_err(|e| Error::io(&root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST).exists())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Curves of each bundle on the test split. Bundles listed explicitly must
/// have been trained on this split's training part; found ones that were not
/// are skipped.
pub fn evaluate(
    config: &RunConfig,
    outs: &mut Outputs,
    ds: &Dataset,
    bundles: &[PathBuf],
) -> Result<Vec<(String, EvaluationReport)>> {
    let (train_split, test) = split(config, ds)?;
    let critical = config.eval.critical()?;
    let explicit = !bundles.is_empty();
    let dirs = if explicit { bundles.to_vec() } else { find_bundles(outs)? };
    if dirs.is_empty() {
        return Err(Error::Validation("no model bundles to evaluate; run `train` first".into()));
    }
    let mut reports = Vec::new();
    for dir in dirs {
        let bundle = ModelBundle::load(&dir)?;
        if bundle.data_hash != train_split.content_hash() {
            let msg = format!("{} was trained on other data", dir.display());
            if explicit {
                return Err(Error::Validation(msg));
            }
            log::warn!("{msg}; skipped");
            continue;
        }
        for (name, predictor) in bundle.model.predictors() {
            let r = misclassification_curve(predictor, &test, critical)?;
            let r = report_metadata(r, config, &test, Some(&bundle))?;
            log::info!("{name}: critical-period misclassification {:.4}", r.critical_mean);
            outs.write(&format!("reports/{name}.csv"), &r.to_csv())?;
            reports.push((name, r));
        }
    }
    let series: Vec<(String, Vec<Option<f64>>)> =
        reports.iter().map(|(n, r)| (n.clone(), r.curve.clone())).collect();
    outs.write("reports/curves.svg", &render_curves("misclassification per unit", &series))?;
    Ok(reports)
}

pub fn ablate(config: &RunConfig, outs: &mut Outputs, ds: &Dataset) -> Result<crate::evaluation::AblationTable> {
    let (train_split, test) = split(config, ds)?;
    let critical = config.eval.critical()?;
    let tc = config.train.train_config();
    let mut table = ablation_study(&train_split, &test, &tc, critical)?;
    table.metadata = provenance(config, &ds.content_hash());
    outs.write("reports/ablation.csv", &table.to_csv())?;
    let random = table.reports.last().expect("random row").clone();
    outs.write("reports/random.csv", &report_metadata(random, config, &test, None)?.to_csv())?;
    for (name, v) in &table.rows {
        log::info!("ablation {name}: {v:.4}");
    }
    if !config.eval.hidden_sizes.is_empty() {
        let sweep = hidden_size_sweep(&train_split, &test, &config.eval.hidden_sizes, &tc, critical)?;
        let mut text = String::from("fnn_hidden,critical_mean\n");
        for (size, v) in &sweep {
            text.push_str(&format!("{size},{v}\n"));
        }
        let mut meta = vec![(
            "selected".to_string(),
            select_hidden_size(&sweep).expect("non-empty sweep").to_string(),
        )];
        meta.extend(provenance(config, &ds.content_hash()));
        text.push_str(&comment_block(&meta));
        outs.write("reports/hidden_sizes.csv", &text)?;
    }
    Ok(table)
}

/// Recursive against direct strategy on the `[eval]` comparison population.
/// Trains the direct set unless a bundle is given.
pub fn compare(
    config: &RunConfig,
    outs: &mut Outputs,
    bundle: Option<&Path>,
) -> Result<crate::evaluation::StrategyTable> {
    let ds = generate_population(&config.compare_params())?;
    let (train_split, test) = split(config, &ds)?;
    let critical = config.eval.critical()?;
    let set = match bundle {
        Some(dir) => match ModelBundle::load(dir)? {
            ModelBundle {
                model: Model::Direct(set),
                data_hash,
                ..
            } if data_hash == train_split.content_hash() => set,
            _ => {
                return Err(Error::Validation(format!(
                    "{} is not a direct set trained on the comparison population",
                    dir.display()
                )))
            }
        },
        None => {
            let set = train_direct_set(&train_split, config.eval.max_horizon, &config.train.train_config())?;
            let mut b = ModelBundle::new(Model::Direct(set.clone()), train_split.content_hash());
            b.provenance = provenance(config, &ds.content_hash());
            save_bundle(config, outs, COMPARE_BUNDLE, &b)?;
            set
        }
    };
    let mut table = strategy_comparison(set.member(1)?, &set, &test, critical)?;
    table.metadata = provenance(config, &ds.content_hash());
    table.metadata.insert(0, ("population".into(), config.eval.compare_population.clone()));
    outs.write("reports/strategy.csv", &table.to_csv())?;
    let mut series = Vec::new();
    for (row, (rec, dir)) in table.rows.iter().zip(&table.reports) {
        let h = row.horizon_units;
        log::info!(
            "horizon {} min: recursive {:.4}, direct {:.4}, difference {:+.4}",
            row.horizon_minutes(),
            row.recursive,
            row.direct,
            row.difference()
        );
        for (kind, r) in [("recursive", rec), ("direct", dir)] {
            let r = report_metadata(r.clone(), config, &test, None)?;
            outs.write(&format!("reports/strategy/{kind}_h{h}.csv"), &r.to_csv())?;
            series.push((format!("{kind} h={h}"), r.curve.clone()));
        }
    }
    outs.write("reports/strategy.svg", &render_curves("recursive and direct strategies", &series))?;
    Ok(table)
}

/// Architectures trained and evaluated by `reproduce`.
pub const REPRODUCED: [&str; 4] = ["fnn", "lstm", "combined", "majority"];

/// Generate, ingest the generated files, train, evaluate, ablate, compare.
pub fn reproduce(config: &RunConfig, outs: &mut Outputs) -> Result<()> {
    generate(config, outs)?;
    let ds = ingest(config, outs)?;
    let generated = generate_population(&config.generator)?;
    if ds.samples() != generated.samples() {
        return Err(Error::Validation(
            "ingesting the generated files did not give back the generated population".into(),
        ));
    }
    let mut dirs = Vec::new();
    for arch in REPRODUCED {
        train(config, outs, &ds, arch)?;
        dirs.push(outs.existing(&bundle_dir(arch)));
    }
    evaluate(config, outs, &ds, &dirs)?;
    ablate(config, outs, &ds)?;
    compare(config, outs, None)?;
    Ok(())
}
