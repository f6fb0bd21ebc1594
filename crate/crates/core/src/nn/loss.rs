use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Training objective, averaged over the rows of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Categorical cross-entropy against one-hot targets.
    CrossEntropy,
    /// Mean p-th power of the absolute error, p in {1, 2}.
    Lp(u8),
}

impl Loss {
    pub fn validate(self) -> Result<()> {
        match self {
            Loss::Lp(p) if p != 1 && p != 2 => Err(Error::Config(format!("unsupported p = {p}"))),
            _ => Ok(()),
        }
    }

    pub fn value(self, output: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
        check_shapes(output, target)?;
        let m = output.nrows().max(1) as f64;
        let total: f64 = match self {
            Loss::CrossEntropy => output
                .iter()
                .zip(target.iter())
                .map(|(&p, &t)| if t == 0.0 { 0.0 } else { -t * p.clamp(PROB_CLAMP, 1.0).ln() })
                .sum(),
            Loss::Lp(1) => output.iter().zip(target.iter()).map(|(y, t)| (y - t).abs()).sum(),
            Loss::Lp(2) => output
                .iter()
                .zip(target.iter())
                .map(|(y, t)| (y - t) * (y - t))
                .sum(),
            Loss::Lp(p) => return Err(Error::Config(format!("unsupported p = {p}"))),
        };
        Ok(total / m)
    }

    /// dL/d(output).
    pub fn gradient(self, output: &Array2<f64>, target: &Array2<f64>) -> Result<Array2<f64>> {
        check_shapes(output, target)?;
        let m = output.nrows().max(1) as f64;
        let mut g = output.clone();
        match self {
            Loss::CrossEntropy => g.zip_mut_with(target, |p, &t| {
                *p = if t == 0.0 || *p < PROB_CLAMP {
                    0.0
                } else {
                    -t / p.min(1.0) / m
                };
            }),
            Loss::Lp(1) => g.zip_mut_with(target, |y, &t| {
                let d = *y - t;
                *y = if d > 0.0 {
                    1.0 / m
                } else if d < 0.0 {
                    -1.0 / m
                } else {
                    0.0
                };
            }),
            Loss::Lp(2) => g.zip_mut_with(target, |y, &t| *y = 2.0 * (*y - t) / m),
            Loss::Lp(p) => return Err(Error::Config(format!("unsupported p = {p}"))),
        }
        Ok(g)
    }
}

fn check_shapes(output: &Array2<f64>, target: &Array2<f64>) -> Result<()> {
    if output.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "output {:?} vs target {:?}",
            output.dim(),
            target.dim()
        )));
    }
    Ok(())
}

/// `-Σ t_d ln(clamp(p_d))` for a single probability vector.
pub fn cross_entropy(probs: &[f64], target: &[f64]) -> Result<f64> {
    if probs.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} probabilities vs {} targets",
            probs.len(),
            target.len()
        )));
    }
    Ok(probs
        .iter()
        .zip(target)
        .map(|(&p, &t)| if t == 0.0 { 0.0 } else { -t * p.clamp(PROB_CLAMP, 1.0).ln() })
        .sum())
}

/// `(1/M) Σ |pred_i - target_i|^p` for p in {1, 2}.
pub fn lp_loss(pred: &[f64], target: &[f64], p: u8) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    Loss::Lp(p).validate()?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(y, t)| (y - t).abs().powi(i32::from(p)))
        .sum();
    Ok(total / pred.len() as f64)
}
