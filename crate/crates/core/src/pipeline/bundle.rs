//! On-disk suite layout:
//! `detector.bin`, `rain.bin`, `snow.bin`, `index_meta.json`, `cdf_rain.csv`,
//! `cdf_snow.csv`, and the indexed training records in `index_db.bin`.
//! Estimator and CDF files are present only when the suite has them.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cdf::CdfMap;
use super::retrieval::RetrievalSuite;
use crate::data::{load_database, save_database, DbFormat, PrecipLabel, RadarSource, SurfaceClass};
use crate::error::{Error, Result};
use crate::knn::{MetricKind, NeighborIndex};
use crate::nn::{load_network, save_network};

pub const DETECTOR_FILE: &str = "detector.bin";
pub const RAIN_FILE: &str = "rain.bin";
pub const SNOW_FILE: &str = "snow.bin";
pub const META_FILE: &str = "index_meta.json";
pub const CDF_RAIN_FILE: &str = "cdf_rain.csv";
pub const CDF_SNOW_FILE: &str = "cdf_snow.csv";
pub const INDEX_DB_FILE: &str = "index_db.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub surface: SurfaceClass,
    pub source: RadarSource,
    pub k: usize,
    pub metric: MetricKind,
    pub n_channels: usize,
    pub n_records: usize,
    pub rain_estimator: bool,
    pub snow_estimator: bool,
    pub cdf_rain: bool,
    pub cdf_snow: bool,
}

pub fn save_suite(suite: &RetrievalSuite, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let db = suite.index().database();
    let meta = IndexMeta {
        surface: suite.surface(),
        source: suite.source(),
        k: suite.k(),
        metric: suite.index().metric().kind(),
        n_channels: suite.n_channels(),
        n_records: db.len(),
        rain_estimator: suite.estimator(PrecipLabel::Rain).is_some(),
        snow_estimator: suite.estimator(PrecipLabel::Snow).is_some(),
        cdf_rain: suite.cdf_map(PrecipLabel::Rain).is_some(),
        cdf_snow: suite.cdf_map(PrecipLabel::Snow).is_some(),
    };
    save_network(&dir.join(DETECTOR_FILE), suite.detector())?;
    for (phase, file, cdf_file) in [
        (PrecipLabel::Rain, RAIN_FILE, CDF_RAIN_FILE),
        (PrecipLabel::Snow, SNOW_FILE, CDF_SNOW_FILE),
    ] {
        remove_if_present(&dir.join(file))?;
        remove_if_present(&dir.join(cdf_file))?;
        if let Some(net) = suite.estimator(phase) {
            save_network(&dir.join(file), net)?;
        }
        if let Some(map) = suite.cdf_map(phase) {
            map.write_csv(File::create(dir.join(cdf_file))?)?;
        }
    }
    let mut json = serde_json::to_string_pretty(&meta)?;
    json.push('\n');
    std::fs::write(dir.join(META_FILE), json)?;
    save_database(db, &dir.join(INDEX_DB_FILE), DbFormat::Binary)?;
    Ok(())
}

fn remove_if_present(path: &Path) -> Result<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn load_suite(dir: &Path) -> Result<RetrievalSuite> {
    let meta: IndexMeta = serde_json::from_reader(BufReader::new(File::open(dir.join(META_FILE))?))?;
    let db = load_database(&dir.join(INDEX_DB_FILE), DbFormat::Binary)?;
    if db.surface() != meta.surface
        || db.source() != meta.source
        || db.n_channels() != meta.n_channels
        || db.len() != meta.n_records
    {
        return Err(Error::Format("index database disagrees with index_meta.json".into()));
    }
    let index = NeighborIndex::build(Arc::new(db), meta.metric)?;
    let detector = load_network(&dir.join(DETECTOR_FILE))?;
    let rain = meta
        .rain_estimator
        .then(|| load_network(&dir.join(RAIN_FILE)))
        .transpose()?;
    let snow = meta
        .snow_estimator
        .then(|| load_network(&dir.join(SNOW_FILE)))
        .transpose()?;
    let cdf = |present: bool, file: &str| -> Result<Option<CdfMap>> {
        present
            .then(|| CdfMap::read_csv(BufReader::new(File::open(dir.join(file))?)))
            .transpose()
    };
    RetrievalSuite::new(
        detector,
        rain,
        snow,
        index,
        meta.k,
        cdf(meta.cdf_rain, CDF_RAIN_FILE)?,
        cdf(meta.cdf_snow, CDF_SNOW_FILE)?,
    )
}
