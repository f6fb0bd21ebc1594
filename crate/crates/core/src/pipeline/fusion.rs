//! Combining the DPR-trained and CPR-trained retrievals of one pixel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::retrieval::PixelRetrieval;
use crate::data::{PrecipLabel, RadarSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusedLabel {
    None,
    Rain,
    Snow,
    /// Both sources detected precipitation with different phases.
    Mixed,
}

impl FusedLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            FusedLabel::None => "none",
            FusedLabel::Rain => "rain",
            FusedLabel::Snow => "snow",
            FusedLabel::Mixed => "mixed",
        }
    }

    pub fn is_precipitating(self) -> bool {
        self != FusedLabel::None
    }
}

impl From<PrecipLabel> for FusedLabel {
    fn from(l: PrecipLabel) -> Self {
        match l {
            PrecipLabel::None => FusedLabel::None,
            PrecipLabel::Rain => FusedLabel::Rain,
            PrecipLabel::Snow => FusedLabel::Snow,
        }
    }
}

impl fmt::Display for FusedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusedLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FusedLabel::None),
            "rain" => Ok(FusedLabel::Rain),
            "snow" => Ok(FusedLabel::Snow),
            "mixed" => Ok(FusedLabel::Mixed),
            other => Err(Error::Schema(format!("unknown fused label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRetrieval {
    pub label: FusedLabel,
    pub rate: f64,
    /// Sources that detected precipitation.
    pub contributors: Vec<RadarSource>,
    /// Whether at least one contributor produced a rate estimate.
    pub estimated: bool,
}

/// Either source detecting precipitation makes the pixel precipitating; the
/// rate is the mean over contributors that produced an estimate.
pub fn fuse(dpr: &PixelRetrieval, cpr: &PixelRetrieval) -> FusedRetrieval {
    let parts: Vec<&PixelRetrieval> = [dpr, cpr]
        .into_iter()
        .filter(|p| p.label.is_precipitating())
        .collect();
    let label = match parts.as_slice() {
        [] => FusedLabel::None,
        [p] => p.label.into(),
        [a, b] if a.label == b.label => a.label.into(),
        _ => FusedLabel::Mixed,
    };
    let rates: Vec<f64> = parts.iter().filter(|p| p.estimated).map(|p| p.rate).collect();
    let rate = if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    };
    let mut contributors: Vec<RadarSource> = parts.iter().map(|p| p.source).collect();
    contributors.sort();
    contributors.dedup();
    FusedRetrieval {
        label,
        rate,
        contributors,
        estimated: !rates.is_empty(),
    }
}
