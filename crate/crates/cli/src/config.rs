//! JSON run configuration. Every flag mirrors a key here; flags win.

use std::path::{Path, PathBuf};

use precip_core::data::{DbFormat, RadarSource, SurfaceClass, SyntheticConfig, DEFAULT_FRACTIONS};
use precip_core::eval::GridPhase;
use precip_core::pipeline::{SuiteConfig, DEFAULT_BAND_WIDTH};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    /// Master seed; per-step seeds are derived from it and recorded in manifests.
    pub seed: u64,
    /// Root for relative paths below.
    pub out: PathBuf,
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub output_dir: PathBuf,
    pub db_format: DbFormat,
    pub sources: Vec<RadarSource>,
    pub surfaces: Vec<SurfaceClass>,
    pub synthetic: SyntheticConfig,
    /// Train, validation, and test fractions.
    pub split: (f64, f64, f64),
    pub suite: SuiteConfig,
    /// Caps `max_epochs` of every network role when set.
    pub max_epochs: Option<usize>,
    pub grid_res: f64,
    pub occ_threshold: f64,
    pub trim: Option<f64>,
    pub band_width: f64,
    pub zonal_phase: GridPhase,
    pub gradcheck: GradCheckConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub nets: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            nets: 24,
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: "synthetic".into(),
            seed: 0,
            out: PathBuf::from("run"),
            data_dir: PathBuf::from("data"),
            model_dir: PathBuf::from("models"),
            output_dir: PathBuf::from("outputs"),
            db_format: DbFormat::Binary,
            sources: RadarSource::ALL.to_vec(),
            surfaces: SurfaceClass::ALL.to_vec(),
            synthetic: SyntheticConfig::default(),
            split: DEFAULT_FRACTIONS,
            suite: SuiteConfig::default(),
            max_epochs: None,
            grid_res: 0.1,
            occ_threshold: 0.01,
            trim: None,
            band_width: DEFAULT_BAND_WIDTH,
            zonal_phase: GridPhase::Snow,
            gradcheck: GradCheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.sources.is_empty() || self.surfaces.is_empty() {
            return Err(CliError::Config("sources and surfaces must be non-empty".into()));
        }
        if !(self.grid_res > 0.0 && self.grid_res.is_finite()) {
            return Err(CliError::Config(format!("grid_res must be > 0, got {}", self.grid_res)));
        }
        if !(self.occ_threshold >= 0.0 && self.occ_threshold.is_finite()) {
            return Err(CliError::Config(format!(
                "occ_threshold must be >= 0, got {}",
                self.occ_threshold
            )));
        }
        if let Some(t) = self.trim {
            if !(0.0..=100.0).contains(&t) {
                return Err(CliError::Config(format!("trim must lie in [0, 100], got {t}")));
            }
        }
        if self.max_epochs == Some(0) {
            return Err(CliError::Config("max_epochs must be >= 1".into()));
        }
        self.synthetic.validate()?;
        for role in [&self.suite.detector, &self.suite.rain_estimator, &self.suite.snow_estimator] {
            role.train.validate()?;
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    pub fn data_path(&self) -> PathBuf {
        self.resolve(&self.data_dir)
    }

    pub fn model_path(&self) -> PathBuf {
        self.resolve(&self.model_dir)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Suite config with the epoch cap applied to every role.
    pub fn effective_suite(&self) -> SuiteConfig {
        let mut s = self.suite.clone();
        s.seed = self.train_seed();
        if let Some(cap) = self.max_epochs {
            for role in [&mut s.detector, &mut s.rain_estimator, &mut s.snow_estimator] {
                role.train.max_epochs = cap;
            }
        }
        s
    }

    pub fn simulate_seed(&self, source: RadarSource) -> u64 {
        self.seed.wrapping_mul(2).wrapping_add(source.code() as u64)
    }

    pub fn split_seed(&self) -> u64 {
        self.seed
    }

    pub fn train_seed(&self) -> u64 {
        self.seed
    }
}

/// `{source}_{surface}` stem shared by database files and bundle directories.
pub fn stratum_name(source: RadarSource, surface: SurfaceClass) -> String {
    format!("{source}_{surface}")
}
