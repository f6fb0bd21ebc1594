//! Detection and estimation skill scores.

use serde::{Deserialize, Serialize};

use crate::data::PrecipLabel;
use crate::error::{Error, Result};

/// One-vs-rest counts for a single target phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `tp / (tp + fn)`, absent when no truth positives exist.
    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `fp / (fp + tn)`, absent when no truth negatives exist.
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion(pred: &[PrecipLabel], truth: &[PrecipLabel], phase: PrecipLabel) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if !phase.is_precipitating() {
        return Err(Error::Config("confusion phase must be rain or snow".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (t == phase, p == phase) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationMetrics {
    pub bias: f64,
    pub ubrmse: f64,
    pub ubmae: f64,
    /// Pairs retained after trimming.
    pub n: usize,
}

/// Linearly interpolated quantile of sorted data: `h = (n - 1) p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bias and bias-removed error magnitudes. With `trim_percentile`, pairs whose
/// truth exceeds that percentile of the truth sample are dropped first.
pub fn estimation_metrics(
    pred: &[f64],
    truth: &[f64],
    trim_percentile: Option<f64>,
) -> Result<EstimationMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Config("no pairs to evaluate".into()));
    }
    let cutoff = match trim_percentile {
        None => f64::INFINITY,
        Some(p) if (0.0..=100.0).contains(&p) => {
            let mut t = truth.to_vec();
            t.sort_by(f64::total_cmp);
            quantile_sorted(&t, p / 100.0)
        }
        Some(p) => return Err(Error::Config(format!("trim percentile {p} outside [0, 100]"))),
    };
    let diffs: Vec<f64> = pred
        .iter()
        .zip(truth)
        .filter(|(_, &t)| t <= cutoff)
        .map(|(p, t)| p - t)
        .collect();
    if diffs.is_empty() {
        return Err(Error::Config("no pairs left after trimming".into()));
    }
    let n = diffs.len() as f64;
    let bias = diffs.iter().sum::<f64>() / n;
    let ubrmse = (diffs.iter().map(|d| (d - bias).powi(2)).sum::<f64>() / n).sqrt();
    let ubmae = diffs.iter().map(|d| (d - bias).abs()).sum::<f64>() / n;
    Ok(EstimationMetrics {
        bias,
        ubrmse,
        ubmae,
        n: diffs.len(),
    })
}
