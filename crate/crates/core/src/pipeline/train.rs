//! Training a retrieval suite from split databases.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::cdf::{fit_cdf_map, DEFAULT_KNOTS};
use super::features::{detection_matrix, detection_targets, estimation_matrix, N_CLASSES};
use super::retrieval::{rain_estimation_available, RetrievalSuite};
use crate::data::{CoincidenceRecord, PrecipDatabase, PrecipLabel, N_ANCILLARY};
use crate::error::{Error, Result};
use crate::knn::{MetricKind, NeighborIndex, DEFAULT_K};
use crate::nn::{mlp_specs, train, Activation, Dataset, EpochRecord, Loss, NetworkParams, Standardizer, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub dropout_rate: f64,
    pub train: TrainConfig,
}

impl NetConfig {
    pub fn detector() -> Self {
        Self {
            hidden: vec![64; 4],
            batch_norm: true,
            dropout_rate: 0.1,
            train: TrainConfig {
                loss: Loss::CrossEntropy,
                learning_rate: 1e-4,
                ..TrainConfig::default()
            },
        }
    }

    /// Rain estimator: L1 loss for the heavy-tailed rate distribution.
    pub fn rain_estimator() -> Self {
        Self::estimator(Loss::Lp(1))
    }

    pub fn snow_estimator() -> Self {
        Self::estimator(Loss::Lp(2))
    }

    fn estimator(loss: Loss) -> Self {
        Self {
            hidden: vec![64; 5],
            batch_norm: true,
            dropout_rate: 0.1,
            train: TrainConfig {
                loss,
                learning_rate: 1e-5,
                ..TrainConfig::default()
            },
        }
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::detector()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub k: usize,
    pub metric: MetricKind,
    pub detector: NetConfig,
    pub rain_estimator: NetConfig,
    pub snow_estimator: NetConfig,
    /// Fit CDF maps on the test split.
    pub fit_cdf: bool,
    pub cdf_knots: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            metric: MetricKind::Euclidean,
            detector: NetConfig::detector(),
            rain_estimator: NetConfig::rain_estimator(),
            snow_estimator: NetConfig::snow_estimator(),
            fit_cdf: true,
            cdf_knots: DEFAULT_KNOTS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedSuite {
    pub suite: RetrievalSuite,
    pub detector_history: Vec<EpochRecord>,
    pub rain_history: Option<Vec<EpochRecord>>,
    pub snow_history: Option<Vec<EpochRecord>>,
}

/// Network with standardization fitted to `x` and the role's seeds.
fn fit_network(
    cfg: &NetConfig,
    n_out: usize,
    output: Activation,
    train_set: &Dataset,
    val_set: &Dataset,
    seed: u64,
) -> Result<(NetworkParams, Vec<EpochRecord>)> {
    let specs = mlp_specs(
        train_set.x.ncols(),
        &cfg.hidden,
        n_out,
        output,
        cfg.batch_norm,
        cfg.dropout_rate,
    );
    let mut net = NetworkParams::new(&specs, seed)?;
    net.set_standardizer(Standardizer::fit(&train_set.x))?;
    let tc = TrainConfig {
        seed: seed.wrapping_add(1),
        ..cfg.train.clone()
    };
    let out = train(net, train_set, val_set, &tc)?;
    Ok((out.params, out.history))
}

fn rate_column<'a>(records: impl IntoIterator<Item = &'a CoincidenceRecord>) -> Array2<f64> {
    let v: Vec<f64> = records.into_iter().map(|r| r.rate).collect();
    Array2::from_shape_vec((v.len(), 1), v).expect("column shape")
}

/// Estimation dataset for `phase`. Training records are members of the
/// index and are excluded from their own neighbor sets.
fn estimation_sets(
    index: &NeighborIndex,
    k: usize,
    train_db: &PrecipDatabase,
    val_db: &PrecipDatabase,
    phase: PrecipLabel,
) -> Result<Option<(Dataset, Dataset)>> {
    let tr: Vec<(usize, &CoincidenceRecord)> = train_db
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == phase)
        .collect();
    let va: Vec<&CoincidenceRecord> = val_db.with_label(phase).collect();
    if tr.is_empty() || va.is_empty() {
        return Ok(None);
    }
    let x_tr = estimation_matrix(tr.iter().map(|&(i, r)| (r, Some(i))), index, k)?;
    let y_tr = rate_column(tr.iter().map(|&(_, r)| r));
    let x_va = estimation_matrix(va.iter().map(|&r| (r, None)), index, k)?;
    let y_va = rate_column(va.iter().copied());
    Ok(Some((Dataset::new(x_tr, y_tr)?, Dataset::new(x_va, y_va)?)))
}

/// Builds the neighbor index over `train_db`, trains the detector and the
/// available phase estimators, and optionally fits CDF maps on `test_db`.
pub fn train_suite(
    train_db: &PrecipDatabase,
    val_db: &PrecipDatabase,
    test_db: &PrecipDatabase,
    cfg: &SuiteConfig,
) -> Result<TrainedSuite> {
    for db in [val_db, test_db] {
        if db.surface() != train_db.surface()
            || db.source() != train_db.source()
            || db.n_channels() != train_db.n_channels()
        {
            return Err(Error::Config("train, validation and test splits disagree in stratum".into()));
        }
    }
    if val_db.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    if train_db.len() <= cfg.k {
        return Err(Error::Config(format!(
            "training split holds {} records, need more than k = {}",
            train_db.len(),
            cfg.k
        )));
    }
    let n_channels = train_db.n_channels();
    let index = NeighborIndex::build(Arc::new(train_db.clone()), cfg.metric)?;

    let det_train = Dataset::new(
        detection_matrix(train_db.records(), n_channels)?,
        detection_targets(train_db.records()),
    )?;
    let det_val = Dataset::new(
        detection_matrix(val_db.records(), n_channels)?,
        detection_targets(val_db.records()),
    )?;
    debug_assert_eq!(det_train.x.ncols(), n_channels + N_ANCILLARY);
    let (detector, detector_history) = fit_network(
        &cfg.detector,
        N_CLASSES,
        Activation::Softmax,
        &det_train,
        &det_val,
        cfg.seed,
    )?;

    let mut estimators = Vec::new();
    for (offset, phase, net_cfg) in [
        (100u64, PrecipLabel::Rain, &cfg.rain_estimator),
        (200, PrecipLabel::Snow, &cfg.snow_estimator),
    ] {
        let allowed = phase != PrecipLabel::Rain
            || rain_estimation_available(train_db.source(), train_db.surface());
        let sets = if allowed {
            estimation_sets(&index, cfg.k, train_db, val_db, phase)?
        } else {
            None
        };
        estimators.push(match sets {
            Some((tr, va)) => {
                let (net, hist) = fit_network(
                    net_cfg,
                    1,
                    Activation::Relu,
                    &tr,
                    &va,
                    cfg.seed.wrapping_add(offset),
                )?;
                Some((net, hist))
            }
            None => None,
        });
    }
    let snow = estimators.pop().expect("two phases");
    let rain = estimators.pop().expect("two phases");
    let mut suite = RetrievalSuite::new(
        detector,
        rain.as_ref().map(|(n, _)| n.clone()),
        snow.as_ref().map(|(n, _)| n.clone()),
        index,
        cfg.k,
        None,
        None,
    )?;

    if cfg.fit_cdf {
        for phase in [PrecipLabel::Rain, PrecipLabel::Snow] {
            if suite.estimator(phase).is_none() {
                continue;
            }
            let recs: Vec<&CoincidenceRecord> = test_db.with_label(phase).collect();
            if recs.is_empty() {
                continue;
            }
            let retrieved = suite.estimate_raw(phase, &recs)?;
            let reference: Vec<f64> = recs.iter().map(|r| r.rate).collect();
            // Estimators whose outputs are all zero leave nothing to match.
            if let Ok(map) = fit_cdf_map(&retrieved, &reference, cfg.cdf_knots) {
                suite.set_cdf_map(phase, Some(map));
            }
        }
    }

    Ok(TrainedSuite {
        suite,
        detector_history,
        rain_history: rain.map(|(_, h)| h),
        snow_history: snow.map(|(_, h)| h),
    })
}
