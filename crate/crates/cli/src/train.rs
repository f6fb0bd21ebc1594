//! `train`: one retrieval suite per simulated (source, surface) database.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use precip_core::data::{load_database, save_database, split_database, PrecipLabel, RadarSource, SurfaceClass};
use precip_core::nn::{write_history_csv, EpochRecord};
use precip_core::pipeline::{save_suite, train_suite, SuiteConfig, TrainedSuite};
use serde::{Deserialize, Serialize};

use crate::config::{stratum_name, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, dir_checksums, read_json, write_json};
use crate::simulate::{DataManifest, DbEntry, MANIFEST};

/// Held-out test splits, written under the data directory.
pub const SPLIT_DIR: &str = "splits";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub experiment: String,
    pub seed: u64,
    pub split_seed: u64,
    pub split: (f64, f64, f64),
    pub suite: SuiteConfig,
    pub bundles: Vec<BundleEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleEntry {
    pub source: RadarSource,
    pub surface: SurfaceClass,
    pub bundle: String,
    pub test_split: String,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub rain_estimator: bool,
    pub snow_estimator: bool,
    pub cdf_rain: bool,
    pub cdf_snow: bool,
    pub detector_epochs: usize,
    pub rain_epochs: Option<usize>,
    pub snow_epochs: Option<usize>,
    pub checksums: BTreeMap<String, String>,
}

pub fn run(cfg: &RunConfig) -> CliResult<ModelManifest> {
    let data_dir = cfg.data_path();
    let manifest_path = data_dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(CliError::Missing(format!(
            "{} not found; run `simulate` first",
            manifest_path.display()
        )));
    }
    let data: DataManifest = read_json(&manifest_path)?;
    let entries: Vec<&DbEntry> = data
        .files
        .iter()
        .filter(|f| cfg.sources.contains(&f.source) && cfg.surfaces.contains(&f.surface))
        .collect();
    if entries.is_empty() {
        return Err(CliError::Missing("no databases match the configured sources and surfaces".into()));
    }
    let model_dir = cfg.model_path();
    create_dir(&model_dir)?;
    create_dir(&data_dir.join(SPLIT_DIR))?;
    let suite_cfg = cfg.effective_suite();

    let results: Vec<CliResult<BundleEntry>> = std::thread::scope(|s| {
        let handles: Vec<_> = entries
            .iter()
            .map(|e| s.spawn(|| train_one(cfg, &suite_cfg, e)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    });
    let bundles = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let manifest = ModelManifest {
        experiment: cfg.experiment.clone(),
        seed: cfg.seed,
        split_seed: cfg.split_seed(),
        split: cfg.split,
        suite: suite_cfg,
        bundles,
    };
    write_json(&model_dir.join(MANIFEST), &manifest)?;
    for b in &manifest.bundles {
        let flag = |present: bool| if present { "yes" } else { "absent" };
        println!(
            "{}: train {} val {} test {}; rain estimator {}, snow estimator {}",
            b.bundle,
            b.n_train,
            b.n_val,
            b.n_test,
            flag(b.rain_estimator),
            flag(b.snow_estimator)
        );
    }
    Ok(manifest)
}

fn train_one(cfg: &RunConfig, suite_cfg: &SuiteConfig, entry: &DbEntry) -> CliResult<BundleEntry> {
    let data_dir = cfg.data_path();
    let db = load_database(&data_dir.join(&entry.file), cfg.db_format)?;
    let (train_db, val_db, test_db) = split_database(&db, cfg.split, cfg.split_seed())?;
    let trained = train_suite(&train_db, &val_db, &test_db, suite_cfg)?;
    let name = stratum_name(entry.source, entry.surface);
    let dir = cfg.model_path().join(&name);
    save_suite(&trained.suite, &dir)?;
    write_histories(&dir, &trained)?;
    let test_split = format!("{SPLIT_DIR}/{name}_test.{}", cfg.db_format.extension());
    save_database(&test_db, &data_dir.join(&test_split), cfg.db_format)?;
    let suite = &trained.suite;
    Ok(BundleEntry {
        source: entry.source,
        surface: entry.surface,
        bundle: name,
        test_split,
        n_train: train_db.len(),
        n_val: val_db.len(),
        n_test: test_db.len(),
        rain_estimator: suite.estimator(PrecipLabel::Rain).is_some(),
        snow_estimator: suite.estimator(PrecipLabel::Snow).is_some(),
        cdf_rain: suite.cdf_map(PrecipLabel::Rain).is_some(),
        cdf_snow: suite.cdf_map(PrecipLabel::Snow).is_some(),
        detector_epochs: trained.detector_history.len(),
        rain_epochs: trained.rain_history.as_ref().map(Vec::len),
        snow_epochs: trained.snow_history.as_ref().map(Vec::len),
        checksums: dir_checksums(&dir)?,
    })
}

fn write_histories(dir: &Path, trained: &TrainedSuite) -> CliResult<()> {
    let write = |file: &str, history: Option<&Vec<EpochRecord>>| -> CliResult<()> {
        let path = dir.join(file);
        match history {
            Some(h) => {
                let out = File::create(&path).map_err(|e| CliError::io(&path, e))?;
                write_history_csv(BufWriter::new(out), h)?;
            }
            None => match std::fs::remove_file(&path) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(CliError::io(&path, e)),
                _ => {}
            },
        }
        Ok(())
    };
    write("detector_history.csv", Some(&trained.detector_history))?;
    write("rain_history.csv", trained.rain_history.as_ref())?;
    write("snow_history.csv", trained.snow_history.as_ref())
}
