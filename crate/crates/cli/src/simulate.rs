//! `simulate`: synthetic coincidence databases per (source, surface).

use precip_core::data::{generate_synthetic, save_database, stratify_by_surface, RadarSource, SurfaceClass};
use serde::{Deserialize, Serialize};

use crate::config::{stratum_name, RunConfig};
use crate::error::CliResult;
use crate::manifest::{create_dir, sha256_file, write_json, LabelCounts};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataManifest {
    pub experiment: String,
    pub seed: u64,
    pub sources: Vec<SourceEntry>,
    pub files: Vec<DbEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceEntry {
    pub source: RadarSource,
    pub seed: u64,
    pub n_records: usize,
    pub label_counts: LabelCounts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DbEntry {
    pub source: RadarSource,
    pub surface: SurfaceClass,
    pub file: String,
    pub n_records: usize,
    pub label_counts: LabelCounts,
    pub sha256: String,
}

pub fn run(cfg: &RunConfig) -> CliResult<DataManifest> {
    let dir = cfg.data_path();
    create_dir(&dir)?;
    let mut manifest = DataManifest {
        experiment: cfg.experiment.clone(),
        seed: cfg.seed,
        sources: Vec::new(),
        files: Vec::new(),
    };
    for &source in &cfg.sources {
        let mut syn = cfg.synthetic.clone();
        syn.source = source;
        syn.seed = cfg.simulate_seed(source);
        let records = generate_synthetic(&syn)?;
        manifest.sources.push(SourceEntry {
            source,
            seed: syn.seed,
            n_records: records.len(),
            label_counts: LabelCounts::of(&records),
        });
        for db in stratify_by_surface(records)? {
            if !cfg.surfaces.contains(&db.surface()) {
                continue;
            }
            let file = format!("{}.{}", stratum_name(source, db.surface()), cfg.db_format.extension());
            let path = dir.join(&file);
            save_database(&db, &path, cfg.db_format)?;
            manifest.files.push(DbEntry {
                source,
                surface: db.surface(),
                n_records: db.len(),
                label_counts: LabelCounts::of(db.records()),
                sha256: sha256_file(&path)?,
                file,
            });
        }
    }
    write_json(&dir.join(MANIFEST), &manifest)?;
    for f in &manifest.files {
        println!("{}: {} records", f.file, f.n_records);
    }
    Ok(manifest)
}
