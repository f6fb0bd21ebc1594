//! `evaluate`: detection and estimation skill, gridded totals, zonal means.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use precip_core::data::{load_records, DbFormat, PrecipLabel};
use precip_core::eval::{
    accumulate_grid, confusion, estimation_metrics, zonal_mean, ConfusionCounts, EstimationMetrics, Grid, GridPhase,
    GridSample, NeumaierSum,
};
use precip_core::pipeline::{fit_zonal_scale, read_retrieval_rows, FusedLabel, RetrievalRow};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{create_dir, sha256_file, write_json};

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub pred: PathBuf,
    pub truth: PathBuf,
    pub fit_zonal: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: PrecipLabel,
    pub confusion: ConfusionCounts,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    /// Over pairs where both prediction and truth carry this phase.
    pub estimation: Option<EstimationMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pred_sha256: String,
    pub truth_sha256: String,
    pub n_pairs: usize,
    pub trim: Option<f64>,
    pub phases: Vec<PhaseReport>,
    /// Over all pairs.
    pub estimation: EstimationMetrics,
    pub grid_res: f64,
    pub occ_threshold: f64,
    pub grid_cells: usize,
    pub input_rate_total: f64,
    pub grid_rate_total: f64,
    pub grid_relative_difference: f64,
}

impl MetricsReport {
    fn to_text(&self) -> String {
        let mut lines = vec![
            format!("n_pairs = {}", self.n_pairs),
            format!("trim = {}", self.trim.map_or("none".into(), |t| t.to_string())),
        ];
        let opt = |v: Option<f64>| v.map_or("absent".into(), |v| v.to_string());
        let est = |prefix: &str, m: &EstimationMetrics, lines: &mut Vec<String>| {
            lines.push(format!("{prefix}retained_pairs = {}", m.n));
            lines.push(format!("{prefix}bias = {}", m.bias));
            lines.push(format!("{prefix}ubrmse = {}", m.ubrmse));
            lines.push(format!("{prefix}ubmae = {}", m.ubmae));
        };
        for p in &self.phases {
            let c = &p.confusion;
            lines.push(format!("{}.tp = {}", p.phase, c.tp));
            lines.push(format!("{}.fp = {}", p.phase, c.fp));
            lines.push(format!("{}.tn = {}", p.phase, c.tn));
            lines.push(format!("{}.fn = {}", p.phase, c.fn_));
            lines.push(format!("{}.tpr = {}", p.phase, opt(p.tpr)));
            lines.push(format!("{}.fpr = {}", p.phase, opt(p.fpr)));
            match &p.estimation {
                Some(m) => est(&format!("{}.", p.phase), m, &mut lines),
                None => lines.push(format!("{}.retained_pairs = 0", p.phase)),
            }
        }
        est("all.", &self.estimation, &mut lines);
        lines.push(format!("grid_res = {}", self.grid_res));
        lines.push(format!("occ_threshold = {}", self.occ_threshold));
        lines.push(format!("grid_cells = {}", self.grid_cells));
        lines.push(format!("input_rate_total = {}", self.input_rate_total));
        lines.push(format!("grid_rate_total = {}", self.grid_rate_total));
        lines.push(format!("grid_relative_difference = {}", self.grid_relative_difference));
        lines.join("\n") + "\n"
    }
}

/// Mixed predictions count as detections of both phases.
fn one_vs_rest(label: FusedLabel, phase: PrecipLabel) -> PrecipLabel {
    let hit = match label {
        FusedLabel::Mixed => true,
        other => other == FusedLabel::from(phase),
    };
    if hit {
        phase
    } else {
        PrecipLabel::None
    }
}

fn samples(rows: impl Iterator<Item = (f64, f64, FusedLabel, f64)>) -> Vec<GridSample> {
    rows.map(|(lat, lon, label, rate)| GridSample { lat, lon, label, rate })
        .collect()
}

fn write_zonal_csv(path: &std::path::Path, pred: &Grid, truth: &Grid) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    writeln!(w, "lat_index,lat_center,phase,pred_mean,truth_mean").map_err(io)?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for phase in GridPhase::ALL {
        let (p, t) = (zonal_mean(pred, phase), zonal_mean(truth, phase));
        for (i, (a, b)) in p.iter().zip(&t).enumerate() {
            if a.is_none() && b.is_none() {
                continue;
            }
            let center = pred.lat_edge(i) + 0.5 * pred.resolution();
            writeln!(w, "{i},{center},{},{},{}", phase.as_str(), fmt(*a), fmt(*b)).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn run(cfg: &RunConfig, args: &EvaluateArgs) -> CliResult<MetricsReport> {
    for p in [&args.pred, &args.truth] {
        if !p.is_file() {
            return Err(CliError::Missing(format!("{} not found", p.display())));
        }
    }
    let pred_file = File::open(&args.pred).map_err(|e| CliError::io(&args.pred, e))?;
    let pred: Vec<RetrievalRow> = read_retrieval_rows(BufReader::new(pred_file))?;
    let truth = load_records(&args.truth, DbFormat::from_path(&args.truth))?.records;
    if pred.len() != truth.len() {
        return Err(CliError::Alignment(format!(
            "{} predictions vs {} truth records",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(CliError::Alignment("nothing to evaluate".into()));
    }
    if let Some(i) = (0..pred.len()).find(|&i| pred[i].lat != truth[i].lat || pred[i].lon != truth[i].lon) {
        return Err(CliError::Alignment(format!(
            "row {} at ({}, {}) does not match truth record at ({}, {})",
            i + 1,
            pred[i].lat,
            pred[i].lon,
            truth[i].lat,
            truth[i].lon
        )));
    }

    let truth_labels: Vec<PrecipLabel> = truth.iter().map(|r| r.label).collect();
    let mut phases = Vec::new();
    for phase in [PrecipLabel::Rain, PrecipLabel::Snow] {
        let pred_labels: Vec<PrecipLabel> = pred.iter().map(|p| one_vs_rest(p.label, phase)).collect();
        let c = confusion(&pred_labels, &truth_labels, phase)?;
        let (p, t): (Vec<f64>, Vec<f64>) = pred
            .iter()
            .zip(&truth)
            .filter(|(p, r)| one_vs_rest(p.label, phase) == phase && r.label == phase)
            .map(|(p, r)| (p.rate, r.rate))
            .unzip();
        let estimation = if p.is_empty() {
            None
        } else {
            Some(estimation_metrics(&p, &t, cfg.trim)?)
        };
        phases.push(PhaseReport {
            phase,
            tpr: c.tpr(),
            fpr: c.fpr(),
            confusion: c,
            estimation,
        });
    }
    let pred_rates: Vec<f64> = pred.iter().map(|p| p.rate).collect();
    let truth_rates: Vec<f64> = truth.iter().map(|r| r.rate).collect();
    let estimation = estimation_metrics(&pred_rates, &truth_rates, cfg.trim)?;

    let pred_samples = samples(pred.iter().map(|p| (p.lat, p.lon, p.label, p.rate)));
    let truth_samples = samples(truth.iter().map(|r| (r.lat, r.lon, r.label.into(), r.rate)));
    let pred_grid = accumulate_grid(&pred_samples, cfg.grid_res, cfg.occ_threshold)?;
    let truth_grid = accumulate_grid(&truth_samples, cfg.grid_res, cfg.occ_threshold)?;
    let mut input_total = NeumaierSum::default();
    for s in pred_samples.iter().filter(|s| GridPhase::All.includes(s.label)) {
        input_total.add(s.rate);
    }
    let (input_total, grid_total) = (input_total.value(), pred_grid.total(GridPhase::All));
    let grid_relative_difference = if input_total == 0.0 {
        grid_total.abs()
    } else {
        ((grid_total - input_total) / input_total).abs()
    };

    let out_dir = cfg.output_path();
    create_dir(&out_dir)?;
    let grid_path = out_dir.join("grid.csv");
    let grid_file = File::create(&grid_path).map_err(|e| CliError::io(&grid_path, e))?;
    pred_grid.write_csv(BufWriter::new(grid_file))?;
    write_zonal_csv(&out_dir.join("zonal.csv"), &pred_grid, &truth_grid)?;
    if let Some(path) = &args.fit_zonal {
        let scale = fit_zonal_scale(&pred_grid, &truth_grid, cfg.band_width, cfg.zonal_phase)?;
        write_json(path, &scale)?;
    }

    let report = MetricsReport {
        pred_sha256: sha256_file(&args.pred)?,
        truth_sha256: sha256_file(&args.truth)?,
        n_pairs: pred.len(),
        trim: cfg.trim,
        phases,
        estimation,
        grid_res: cfg.grid_res,
        occ_threshold: cfg.occ_threshold,
        grid_cells: pred_grid.cells().len(),
        input_rate_total: input_total,
        grid_rate_total: grid_total,
        grid_relative_difference,
    };
    write_json(&out_dir.join("metrics.json"), &report)?;
    let text = report.to_text();
    let txt_path = out_dir.join("metrics.txt");
    std::fs::write(&txt_path, &text).map_err(|e| CliError::io(&txt_path, e))?;
    print!("{text}");
    Ok(report)
}
