//! Mini-batch RMSProp training with validation-based early stopping.

use std::io::Write;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::Loss;
use super::network::{Gradients, Mode, NetworkParams};
use super::optim::{rmsprop_step, RmsPropConfig};
use crate::error::{Error, Result};

/// Minimum decrease of the validation loss that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: Loss,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Apply each layer's dropout rate during training.
    pub dropout: bool,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: Loss::CrossEntropy,
            learning_rate: 1e-4,
            batch_size: 1000,
            max_epochs: 500,
            patience: 25,
            dropout: true,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if !(self.rmsprop_decay > 0.0 && self.rmsprop_decay < 1.0) {
            return Err(Error::Config(format!(
                "rmsprop_decay must lie in (0, 1), got {}",
                self.rmsprop_decay
            )));
        }
        if !(self.rmsprop_epsilon > 0.0) {
            return Err(Error::Config("rmsprop_epsilon must be > 0".into()));
        }
        Ok(())
    }

    fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            decay: self.rmsprop_decay,
            epsilon: self.rmsprop_epsilon,
        }
    }
}

/// Inputs and targets, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Shape(format!(
                "{} input rows vs {} target rows",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    fn rows(&self, idx: &[usize]) -> (Array2<f64>, Array2<f64>) {
        (self.x.select(Axis(0), idx), self.y.select(Axis(0), idx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: NetworkParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean loss of `net` over `data` in inference mode.
pub fn evaluate_loss(net: &NetworkParams, data: &Dataset, loss: Loss) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    loss.value(&net.predict(&data.x)?, &data.y)
}

pub fn train(
    net: NetworkParams,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if val_set.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let loss = config.loss;
    train_with_validator(net, train_set, config, |params, _epoch| {
        evaluate_loss(params, val_set, loss)
    })
}

/// Training loop with a caller-supplied validation score, evaluated once per
/// epoch (1-based). Stops after `patience` epochs without improvement.
pub fn train_with_validator<F>(
    mut net: NetworkParams,
    train_set: &Dataset,
    config: &TrainConfig,
    mut validate: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&NetworkParams, usize) -> Result<f64>,
{
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let rms = config.rmsprop();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut accum = Gradients::zeros_like(&net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, NetworkParams)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch_no, idx) in order.chunks(config.batch_size).enumerate() {
            let fail = |msg: String| Error::Training {
                epoch,
                batch: batch_no + 1,
                msg,
            };
            let (x, y) = train_set.rows(idx);
            let seed = dropout_rng.random::<u64>();
            let (out, cache) = if config.dropout {
                net.forward(&x, Mode::Train { seed })
                    .map(|(o, c)| (o, c.expect("training mode yields a cache")))
            } else {
                net.forward_with_masks(&x, vec![None; net.layers().len()])
            }
            .map_err(|e| fail(e.to_string()))?;
            let batch_loss = config.loss.value(&out, &y)?;
            if !batch_loss.is_finite() {
                return Err(fail(format!("loss is {batch_loss}")));
            }
            loss_sum += batch_loss * idx.len() as f64;
            let grad_out = config.loss.gradient(&out, &y)?;
            let grads = net.backward(&cache, &grad_out)?;
            net.update_running_stats(&cache);
            rmsprop_step(&mut net, &grads, &mut accum, &rms).map_err(|e| fail(e.to_string()))?;
            if !net.all_finite() {
                return Err(fail("parameters became non-finite".into()));
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = validate(&net, epoch)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                batch: 0,
                msg: format!("validation loss is {val_loss}"),
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });

        let improved = match &best {
            None => true,
            Some((b, _, _)) => val_loss < b - MIN_IMPROVEMENT,
        };
        if improved {
            best = Some((val_loss, epoch, net.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
        stopped_early,
    })
}

/// Writes `epoch,train_loss,val_loss` rows.
pub fn write_history_csv<W: Write>(out: W, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            h.train_loss.to_string(),
            h.val_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::Activation;
    use crate::nn::network::mlp_specs;

    fn toy() -> Dataset {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 2 + j) as f64 * 0.37).sin());
        let y = Array2::from_shape_fn((40, 1), |(i, _)| x[(i, 0)] - 0.5 * x[(i, 1)]);
        Dataset::new(x, y).unwrap()
    }

    fn net() -> NetworkParams {
        NetworkParams::new(&mlp_specs(2, &[8], 1, Activation::Linear, false, 0.0), 4).unwrap()
    }

    #[test]
    fn hard_cap_of_one_epoch() {
        let cfg = TrainConfig {
            loss: Loss::Lp(2),
            max_epochs: 1,
            batch_size: 7,
            ..TrainConfig::default()
        };
        let out = train(net(), &toy(), &toy(), &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn increasing_validation_stops_after_patience() {
        let cfg = TrainConfig {
            loss: Loss::Lp(2),
            max_epochs: 100,
            patience: 25,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let mut snapshots = Vec::new();
        let out = train_with_validator(net(), &toy(), &cfg, |p, epoch| {
            snapshots.push(p.clone());
            Ok(epoch as f64)
        })
        .unwrap();
        assert_eq!(out.history.len(), 26);
        assert_eq!(out.best_epoch, 1);
        assert!(out.stopped_early);
        assert_eq!(out.params, snapshots[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            loss: Loss::Lp(1),
            max_epochs: 5,
            batch_size: 8,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let a = train(net(), &toy(), &toy(), &cfg).unwrap();
        let b = train(net(), &toy(), &toy(), &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn loss_decreases_on_a_linear_target() {
        let cfg = TrainConfig {
            loss: Loss::Lp(2),
            max_epochs: 200,
            batch_size: 8,
            learning_rate: 1e-2,
            dropout: false,
            ..TrainConfig::default()
        };
        let out = train(net(), &toy(), &toy(), &cfg).unwrap();
        let first = out.history[0].val_loss;
        let best = out.history[out.best_epoch - 1].val_loss;
        assert!(best < 0.1 * first, "{first} -> {best}");
    }

    #[test]
    fn divergence_reports_coordinates() {
        let cfg = TrainConfig {
            loss: Loss::Lp(2),
            max_epochs: 3,
            batch_size: 40,
            ..TrainConfig::default()
        };
        let mut bad = toy();
        bad.y[(3, 0)] = f64::NAN;
        match train(net(), &bad, &toy(), &cfg) {
            Err(Error::Training { epoch, batch, .. }) => assert_eq!((epoch, batch), (1, 1)),
            other => panic!("expected a training error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        write_history_csv(
            &mut buf,
            &[EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,val_loss\n1,0.5,0.25\n");
    }
}
