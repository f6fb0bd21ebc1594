//! Per-pixel detection followed by phase-specific rate estimation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::cdf::CdfMap;
use super::features::{class_label, detection_matrix, estimation_matrix, N_CLASSES};
use crate::data::{CoincidenceRecord, PrecipLabel, RadarSource, SurfaceClass, N_ANCILLARY, OCCURRENCE_THRESHOLD};
use crate::error::{Error, Result};
use crate::knn::NeighborIndex;
use crate::nn::NetworkParams;

/// Rows per network evaluation during batch retrieval.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelRetrieval {
    /// Detector probabilities in (none, snow, rain) order.
    pub probs: [f64; N_CLASSES],
    pub label: PrecipLabel,
    pub rate: f64,
    /// False when a phase was detected but no estimator exists for it.
    pub estimated: bool,
    pub source: RadarSource,
}

/// Detector, phase estimators, neighbor index, and bias maps for one
/// (surface, radar) stratum.
#[derive(Debug, Clone)]
pub struct RetrievalSuite {
    surface: SurfaceClass,
    source: RadarSource,
    detector: NetworkParams,
    rain_estimator: Option<NetworkParams>,
    snow_estimator: Option<NetworkParams>,
    index: NeighborIndex,
    k: usize,
    cdf_rain: Option<CdfMap>,
    cdf_snow: Option<CdfMap>,
}

/// Rain rates cannot be estimated from CPR over land or coast.
pub fn rain_estimation_available(source: RadarSource, surface: SurfaceClass) -> bool {
    !(source == RadarSource::Cpr && surface != SurfaceClass::Ocean)
}

impl RetrievalSuite {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        detector: NetworkParams,
        rain_estimator: Option<NetworkParams>,
        snow_estimator: Option<NetworkParams>,
        index: NeighborIndex,
        k: usize,
        cdf_rain: Option<CdfMap>,
        cdf_snow: Option<CdfMap>,
    ) -> Result<Self> {
        let db = index.database();
        let (surface, source, n_channels) = (db.surface(), db.source(), db.n_channels());
        if detector.n_outputs() != N_CLASSES || detector.n_inputs() != n_channels + N_ANCILLARY {
            return Err(Error::Shape(format!(
                "detector maps {} -> {}, expected {} -> {N_CLASSES}",
                detector.n_inputs(),
                detector.n_outputs(),
                n_channels + N_ANCILLARY
            )));
        }
        if k == 0 || k > db.len() {
            return Err(Error::Config(format!("k = {k} with {} indexed records", db.len())));
        }
        for (name, est) in [("rain", &rain_estimator), ("snow", &snow_estimator)] {
            if let Some(e) = est {
                if e.n_outputs() != 1 || e.n_inputs() != n_channels + k {
                    return Err(Error::Shape(format!(
                        "{name} estimator maps {} -> {}, expected {} -> 1",
                        e.n_inputs(),
                        e.n_outputs(),
                        n_channels + k
                    )));
                }
            }
        }
        if rain_estimator.is_some() && !rain_estimation_available(source, surface) {
            return Err(Error::Config(format!(
                "{source} {surface} suites carry no rain estimator"
            )));
        }
        Ok(Self {
            surface,
            source,
            detector,
            rain_estimator,
            snow_estimator,
            index,
            k,
            cdf_rain,
            cdf_snow,
        })
    }

    pub fn surface(&self) -> SurfaceClass {
        self.surface
    }

    pub fn source(&self) -> RadarSource {
        self.source
    }

    pub fn detector(&self) -> &NetworkParams {
        &self.detector
    }

    pub fn estimator(&self, phase: PrecipLabel) -> Option<&NetworkParams> {
        match phase {
            PrecipLabel::Rain => self.rain_estimator.as_ref(),
            PrecipLabel::Snow => self.snow_estimator.as_ref(),
            PrecipLabel::None => None,
        }
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_channels(&self) -> usize {
        self.index.n_channels()
    }

    pub fn cdf_map(&self, phase: PrecipLabel) -> Option<&CdfMap> {
        match phase {
            PrecipLabel::Rain => self.cdf_rain.as_ref(),
            PrecipLabel::Snow => self.cdf_snow.as_ref(),
            PrecipLabel::None => None,
        }
    }

    pub fn set_cdf_map(&mut self, phase: PrecipLabel, map: Option<CdfMap>) {
        match phase {
            PrecipLabel::Rain => self.cdf_rain = map,
            PrecipLabel::Snow => self.cdf_snow = map,
            PrecipLabel::None => {}
        }
    }

    fn check(&self, r: &CoincidenceRecord) -> Result<()> {
        if r.surface != self.surface {
            return Err(Error::Routing(format!(
                "{} record sent to the {} suite",
                r.surface, self.surface
            )));
        }
        if r.tb.len() != self.n_channels() {
            return Err(Error::Shape(format!(
                "record has {} channels, suite expects {}",
                r.tb.len(),
                self.n_channels()
            )));
        }
        Ok(())
    }

    /// Raw estimator outputs (no bias map) for records assumed to be of `phase`.
    pub fn estimate_raw(&self, phase: PrecipLabel, records: &[&CoincidenceRecord]) -> Result<Vec<f64>> {
        let est = self
            .estimator(phase)
            .ok_or_else(|| Error::Estimation(format!("no {phase} estimator")))?;
        let mut out = Vec::with_capacity(records.len());
        for chunk in records.chunks(CHUNK) {
            let x = estimation_matrix(chunk.iter().map(|r| (*r, None)), &self.index, self.k)?;
            out.extend(est.predict(&x)?.column(0).iter().copied());
        }
        Ok(out)
    }

    /// Detector probabilities, one row per record.
    pub fn detect(&self, records: &[CoincidenceRecord]) -> Result<Array2<f64>> {
        let mut probs = Array2::zeros((records.len(), N_CLASSES));
        for (c, chunk) in records.chunks(CHUNK).enumerate() {
            let p = self.detector.predict(&detection_matrix(chunk, self.n_channels())?)?;
            probs
                .slice_mut(ndarray::s![c * CHUNK..c * CHUNK + chunk.len(), ..])
                .assign(&p);
        }
        Ok(probs)
    }
}

pub fn retrieve_pixel(suite: &RetrievalSuite, record: &CoincidenceRecord) -> Result<PixelRetrieval> {
    Ok(retrieve_records(suite, std::slice::from_ref(record))?.remove(0))
}

/// Retrieves every record; all records must match the suite's surface.
pub fn retrieve_records(suite: &RetrievalSuite, records: &[CoincidenceRecord]) -> Result<Vec<PixelRetrieval>> {
    for r in records {
        suite.check(r)?;
    }
    let probs = suite.detect(records)?;
    let mut out: Vec<PixelRetrieval> = probs
        .outer_iter()
        .map(|p| {
            let probs = [p[0], p[1], p[2]];
            PixelRetrieval {
                probs,
                label: class_label(crate::nn::activation::argmax(p)),
                rate: 0.0,
                estimated: false,
                source: suite.source,
            }
        })
        .collect();
    for phase in [PrecipLabel::Rain, PrecipLabel::Snow] {
        if suite.estimator(phase).is_none() {
            continue;
        }
        let idx: Vec<usize> = (0..out.len()).filter(|&i| out[i].label == phase).collect();
        if idx.is_empty() {
            continue;
        }
        let recs: Vec<&CoincidenceRecord> = idx.iter().map(|&i| &records[i]).collect();
        let raw = suite.estimate_raw(phase, &recs)?;
        let map = suite.cdf_map(phase);
        for (&i, r) in idx.iter().zip(raw) {
            let r = map.map_or(r, |m| m.apply(r));
            out[i].rate = finalize_rate(r);
            out[i].estimated = true;
        }
    }
    Ok(out)
}

/// Detected and estimated pixels report at least the occurrence threshold,
/// keeping `rate = 0` reserved for non-precipitating or unestimated pixels.
pub fn finalize_rate(r: f64) -> f64 {
    r.max(OCCURRENCE_THRESHOLD)
}
