//! `retrieve`: per-record retrieval, optional DPR/CPR fusion and zonal rescaling.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use precip_core::data::{load_records, CoincidenceRecord, DbFormat, RadarSource, SurfaceClass};
use precip_core::eval::GridSample;
use precip_core::pipeline::{
    apply_zonal_scale, fuse, load_suite, retrieve_records, write_fused_csv, write_retrieval_csv, FusedLabel,
    LocatedFusion, LocatedRetrieval, PixelRetrieval, RetrievalSuite, ZonalScale,
};
use serde::{Deserialize, Serialize};

use crate::config::{stratum_name, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, read_json, sha256_file, write_json};

#[derive(Debug, Clone)]
pub struct RetrieveArgs {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub fuse: bool,
    pub debias_zonal: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrieveManifest {
    pub input_sha256: String,
    pub n_records: usize,
    pub fused: bool,
    pub bundles: Vec<String>,
    pub zonal_scale_sha256: Option<String>,
    pub output: String,
    pub output_sha256: String,
}

struct Suites {
    dir: PathBuf,
    loaded: BTreeMap<(RadarSource, SurfaceClass), RetrievalSuite>,
}

impl Suites {
    fn get(&mut self, source: RadarSource, surface: SurfaceClass) -> CliResult<&RetrievalSuite> {
        if !self.loaded.contains_key(&(source, surface)) {
            let dir = self.dir.join(stratum_name(source, surface));
            if !dir.is_dir() {
                return Err(CliError::Missing(format!("no suite bundle at {}", dir.display())));
            }
            self.loaded.insert((source, surface), load_suite(&dir)?);
        }
        Ok(&self.loaded[&(source, surface)])
    }
}

/// Retrieves `records` grouped by (source, surface), restoring input order.
fn retrieve_grouped(
    suites: &mut Suites,
    records: &[CoincidenceRecord],
    source_of: impl Fn(&CoincidenceRecord) -> RadarSource,
) -> CliResult<Vec<PixelRetrieval>> {
    let mut groups: BTreeMap<(RadarSource, SurfaceClass), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((source_of(r), r.surface)).or_default().push(i);
    }
    let mut out: Vec<Option<PixelRetrieval>> = vec![None; records.len()];
    for ((source, surface), idx) in groups {
        let suite = suites.get(source, surface)?;
        let batch: Vec<CoincidenceRecord> = idx.iter().map(|&i| records[i].clone()).collect();
        for (i, p) in idx.into_iter().zip(retrieve_records(suite, &batch)?) {
            out[i] = Some(p);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("every record retrieved")).collect())
}

fn rescale(scale: &ZonalScale, lat_lon_label_rate: Vec<(f64, f64, FusedLabel, f64)>) -> CliResult<Vec<f64>> {
    let mut samples: Vec<GridSample> = lat_lon_label_rate
        .into_iter()
        .map(|(lat, lon, label, rate)| GridSample { lat, lon, label, rate })
        .collect();
    apply_zonal_scale(scale, &mut samples)?;
    Ok(samples.into_iter().map(|s| s.rate).collect())
}

pub fn run(cfg: &RunConfig, args: &RetrieveArgs) -> CliResult<RetrieveManifest> {
    if !args.input.is_file() {
        return Err(CliError::Missing(format!("input {} not found", args.input.display())));
    }
    let file = load_records(&args.input, DbFormat::from_path(&args.input))?;
    let records = file.records;
    let scale: Option<ZonalScale> = args.debias_zonal.as_deref().map(read_json).transpose()?;
    let mut suites = Suites {
        dir: args.models.clone().unwrap_or_else(|| cfg.model_path()),
        loaded: BTreeMap::new(),
    };
    let default_name = if args.fuse { "fused.csv" } else { "retrieval.csv" };
    let output = args
        .output
        .clone()
        .unwrap_or_else(|| cfg.output_path().join(default_name));
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let out = File::create(&output).map_err(|e| CliError::io(&output, e))?;

    if args.fuse {
        let dpr = retrieve_grouped(&mut suites, &records, |_| RadarSource::Dpr)?;
        let cpr = retrieve_grouped(&mut suites, &records, |_| RadarSource::Cpr)?;
        let mut rows: Vec<LocatedFusion> = records
            .iter()
            .zip(dpr.iter().zip(&cpr))
            .map(|(r, (d, c))| LocatedFusion {
                lat: r.lat,
                lon: r.lon,
                fused: fuse(d, c),
            })
            .collect();
        if let Some(scale) = &scale {
            let rates = rescale(scale, rows.iter().map(|r| (r.lat, r.lon, r.fused.label, r.fused.rate)).collect())?;
            for (row, rate) in rows.iter_mut().zip(rates) {
                row.fused.rate = rate;
            }
        }
        write_fused_csv(BufWriter::new(out), &rows)?;
    } else {
        let retrieved = retrieve_grouped(&mut suites, &records, |r| r.source)?;
        let mut rows: Vec<LocatedRetrieval> = records
            .iter()
            .zip(retrieved)
            .map(|(r, p)| LocatedRetrieval {
                lat: r.lat,
                lon: r.lon,
                retrieval: p,
            })
            .collect();
        if let Some(scale) = &scale {
            let rates = rescale(
                scale,
                rows.iter()
                    .map(|r| (r.lat, r.lon, r.retrieval.label.into(), r.retrieval.rate))
                    .collect(),
            )?;
            for (row, rate) in rows.iter_mut().zip(rates) {
                row.retrieval.rate = rate;
            }
        }
        write_retrieval_csv(BufWriter::new(out), &rows)?;
    }

    let manifest = RetrieveManifest {
        input_sha256: sha256_file(&args.input)?,
        n_records: records.len(),
        fused: args.fuse,
        bundles: suites
            .loaded
            .keys()
            .map(|&(source, surface)| stratum_name(source, surface))
            .collect(),
        zonal_scale_sha256: args.debias_zonal.as_deref().map(sha256_file).transpose()?,
        output: file_name(&output),
        output_sha256: sha256_file(&output)?,
    };
    write_json(&output.with_extension("manifest.json"), &manifest)?;
    println!("{} rows -> {}", manifest.n_records, output.display());
    Ok(manifest)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
