//! `precip`: simulate, train, retrieve, evaluate, and gradcheck.

mod config;
mod error;
mod evaluate;
mod gradcheck;
mod manifest;
mod retrieve;
mod simulate;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use precip_core::data::{RadarSource, SurfaceClass};
use precip_core::eval::GridPhase;

use config::RunConfig;
use error::{exit, CliResult};

#[derive(Debug, Parser)]
#[command(name = "precip", version, about = "Passive microwave precipitation retrieval experiments")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for relative data, model, and output paths.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic databases per (source, surface).
    Simulate(SimulateArgs),
    /// Train one retrieval suite per database.
    Train(TrainArgs),
    /// Run retrieval suites over an input database.
    Retrieve(RetrieveArgs),
    /// Score retrievals against truth records.
    Evaluate(EvaluateArgs),
    /// Compare backprop against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Records per source, all surfaces together.
    #[arg(long)]
    n_records: Option<usize>,
    /// Radar source to simulate (repeatable): dpr, cpr.
    #[arg(long = "source")]
    sources: Vec<RadarSource>,
    /// Surface class to keep (repeatable): ocean, land, coast.
    #[arg(long = "surface")]
    surfaces: Vec<SurfaceClass>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Radar source to train (repeatable).
    #[arg(long = "source")]
    sources: Vec<RadarSource>,
    /// Surface class to train (repeatable).
    #[arg(long = "surface")]
    surfaces: Vec<SurfaceClass>,
    /// Caps max_epochs of every network.
    #[arg(long)]
    max_epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    /// Input records (`.csv` or binary).
    #[arg(long)]
    input: PathBuf,
    /// Output CSV; defaults to `outputs/retrieval.csv` or `outputs/fused.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory holding `{source}_{surface}` bundles.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Run DPR and CPR suites and fuse their retrievals.
    #[arg(long)]
    fuse: bool,
    /// Zonal scale JSON written by `evaluate --fit-zonal`.
    #[arg(long)]
    debias_zonal: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Retrieval or fused CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Truth records aligned row by row with `pred`.
    #[arg(long)]
    truth: PathBuf,
    /// Drop pairs whose truth exceeds this percentile.
    #[arg(long)]
    trim: Option<f64>,
    /// Grid cell size in degrees.
    #[arg(long)]
    grid_res: Option<f64>,
    /// Rate above which a sample counts as an occurrence, mm/hr.
    #[arg(long)]
    occ_threshold: Option<f64>,
    /// Latitude band width of the zonal scale in degrees.
    #[arg(long)]
    band_width: Option<f64>,
    /// Phase the zonal scale is fitted on: rain, snow, all.
    #[arg(long, value_parser = parse_phase)]
    zonal_phase: Option<GridPhase>,
    /// Write a zonal scale fitted from the prediction and truth grids.
    #[arg(long)]
    fit_zonal: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Number of random networks.
    #[arg(long)]
    nets: Option<usize>,
    /// Central-difference step.
    #[arg(long)]
    step: Option<f64>,
    /// Largest accepted relative error.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Corrupt one analytic gradient entry per network.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn parse_phase(s: &str) -> Result<GridPhase, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown phase `{s}`"))
}

fn override_list<T>(target: &mut Vec<T>, values: Vec<T>) {
    if !values.is_empty() {
        *target = values;
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    match cli.command {
        Command::Simulate(a) => {
            if let Some(n) = a.n_records {
                cfg.synthetic.n_records = n;
            }
            override_list(&mut cfg.sources, a.sources);
            override_list(&mut cfg.surfaces, a.surfaces);
            cfg.validate()?;
            simulate::run(&cfg).map(drop)
        }
        Command::Train(a) => {
            override_list(&mut cfg.sources, a.sources);
            override_list(&mut cfg.surfaces, a.surfaces);
            cfg.max_epochs = a.max_epochs.or(cfg.max_epochs);
            cfg.validate()?;
            train::run(&cfg).map(drop)
        }
        Command::Retrieve(a) => {
            cfg.validate()?;
            let args = retrieve::RetrieveArgs {
                input: a.input,
                output: a.output,
                models: a.models,
                fuse: a.fuse,
                debias_zonal: a.debias_zonal,
            };
            retrieve::run(&cfg, &args).map(drop)
        }
        Command::Evaluate(a) => {
            cfg.trim = a.trim.or(cfg.trim);
            cfg.grid_res = a.grid_res.unwrap_or(cfg.grid_res);
            cfg.occ_threshold = a.occ_threshold.unwrap_or(cfg.occ_threshold);
            cfg.band_width = a.band_width.unwrap_or(cfg.band_width);
            cfg.zonal_phase = a.zonal_phase.unwrap_or(cfg.zonal_phase);
            cfg.validate()?;
            let args = evaluate::EvaluateArgs {
                pred: a.pred,
                truth: a.truth,
                fit_zonal: a.fit_zonal,
            };
            evaluate::run(&cfg, &args).map(drop)
        }
        Command::Gradcheck(a) => {
            cfg.gradcheck.nets = a.nets.unwrap_or(cfg.gradcheck.nets);
            cfg.gradcheck.step = a.step.unwrap_or(cfg.gradcheck.step);
            cfg.gradcheck.tolerance = a.tolerance.unwrap_or(cfg.gradcheck.tolerance);
            cfg.validate()?;
            gradcheck::run(&cfg, a.inject_fault).map(drop)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
