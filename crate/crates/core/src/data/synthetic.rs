//! Desk-scale coincidence generator.
//!
//! Brightness temperatures follow a toy radiometric forward model: a per-surface
//! baseline, emission warming `a * ln(1 + rate)` on channels at or below 37 GHz
//! for rain over ocean, and scattering cooling `b * ln(1 + rate)` on channels at
//! or above 89 GHz (full strength for snow, half strength for rain). Ancillary
//! state is drawn from label-conditional distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::record::{
    AncillaryState, CoincidenceRecord, PrecipLabel, RadarSource, SurfaceClass, OCCURRENCE_THRESHOLD,
    TB_MAX, TB_MIN,
};
use crate::error::{Error, Result};

/// Upper frequency bound of the emission-sensitive channels, GHz.
pub const EMISSION_MAX_GHZ: f64 = 37.0;
/// Lower frequency bound of the scattering-sensitive channels, GHz.
pub const SCATTERING_MIN_GHZ: f64 = 89.0;
/// Relative scattering strength of ice aloft in raining columns.
pub const RAIN_ICE_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub freq_ghz: f64,
    /// Clear-sky brightness temperature over ocean, K.
    pub ocean_k: f64,
    /// Clear-sky brightness temperature over land, K.
    pub land_k: f64,
}

impl ChannelSpec {
    pub fn baseline(&self, surface: SurfaceClass) -> f64 {
        match surface {
            SurfaceClass::Ocean => self.ocean_k,
            SurfaceClass::Land => self.land_k,
            SurfaceClass::Coast => 0.5 * (self.ocean_k + self.land_k),
        }
    }
}

/// GMI-like 13-channel set ordered by frequency (10.65 to 183.31 GHz).
pub fn gmi_channels() -> Vec<ChannelSpec> {
    let table: [(f64, f64, f64); 13] = [
        (10.65, 170.0, 275.0),
        (10.65, 95.0, 265.0),
        (18.7, 185.0, 276.0),
        (18.7, 115.0, 266.0),
        (23.8, 205.0, 277.0),
        (36.64, 215.0, 274.0),
        (36.64, 150.0, 266.0),
        (89.0, 255.0, 272.0),
        (89.0, 225.0, 268.0),
        (166.0, 270.0, 268.0),
        (166.0, 265.0, 266.0),
        (183.31, 255.0, 258.0),
        (183.31, 265.0, 265.0),
    ];
    table
        .iter()
        .map(|&(freq_ghz, ocean_k, land_k)| ChannelSpec {
            freq_ghz,
            ocean_k,
            land_k,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_records: usize,
    /// Probabilities of (none, rain, snow).
    pub class_priors: [f64; 3],
    /// Probabilities of (ocean, land, coast).
    pub surface_mix: [f64; 3],
    pub rain_dist: LogNormalParams,
    pub snow_dist: GammaParams,
    pub tb_noise_sigma: f64,
    pub seed: u64,
    pub source: RadarSource,
    pub channels: Vec<ChannelSpec>,
    /// Emission warming gain, K per unit ln(1 + rate).
    pub emission_gain: f64,
    /// Scattering cooling gain, K per unit ln(1 + rate).
    pub scattering_gain: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_records: 100_000,
            class_priors: [0.7, 0.2, 0.1],
            surface_mix: [0.5, 0.3, 0.2],
            rain_dist: LogNormalParams { mu: 0.0, sigma: 1.0 },
            snow_dist: GammaParams {
                shape: 2.0,
                scale: 0.15,
            },
            tb_noise_sigma: 2.0,
            seed: 0,
            source: RadarSource::Dpr,
            channels: gmi_channels(),
            emission_gain: 15.0,
            scattering_gain: 25.0,
        }
    }
}

impl SyntheticConfig {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, probs) in [
            ("class_priors", &self.class_priors),
            ("surface_mix", &self.surface_mix),
        ] {
            if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                return Err(Error::Config(format!("{name} must be non-negative: {probs:?}")));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("{name} must sum to 1, got {sum}")));
            }
        }
        let positive = [
            ("rain_dist.sigma", self.rain_dist.sigma),
            ("snow_dist.shape", self.snow_dist.shape),
            ("snow_dist.scale", self.snow_dist.scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.rain_dist.mu.is_finite() {
            return Err(Error::Config("rain_dist.mu must be finite".into()));
        }
        if !(self.tb_noise_sigma >= 0.0 && self.tb_noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "tb_noise_sigma must be >= 0, got {}",
                self.tb_noise_sigma
            )));
        }
        if !(self.emission_gain >= 0.0 && self.scattering_gain >= 0.0) {
            return Err(Error::Config("forward-model gains must be >= 0".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("at least one channel is required".into()));
        }
        if self
            .channels
            .windows(2)
            .any(|w| w[1].freq_ghz < w[0].freq_ghz)
        {
            return Err(Error::Config("channels must be ordered by frequency".into()));
        }
        Ok(())
    }

    /// Noise-free brightness temperatures for a pixel.
    pub fn mean_tb(&self, surface: SurfaceClass, label: PrecipLabel, rate: f64) -> Vec<f64> {
        let signal = (1.0 + rate.max(0.0)).ln();
        let scattering_strength = match label {
            PrecipLabel::None => 0.0,
            PrecipLabel::Rain => RAIN_ICE_FRACTION,
            PrecipLabel::Snow => 1.0,
        };
        let emits = label == PrecipLabel::Rain && surface == SurfaceClass::Ocean;
        self.channels
            .iter()
            .map(|ch| {
                let mut tb = ch.baseline(surface);
                if emits && ch.freq_ghz <= EMISSION_MAX_GHZ {
                    tb += self.emission_gain * signal;
                }
                if ch.freq_ghz >= SCATTERING_MIN_GHZ {
                    tb -= self.scattering_gain * scattering_strength * signal;
                }
                tb
            })
            .collect()
    }
}

fn pick<R: Rng>(rng: &mut R, probs: &[f64; 3]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Round-off can leave acc a hair under 1; fall back to the last class with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn ancillary<R: Rng>(rng: &mut R, label: PrecipLabel, rate: f64) -> AncillaryState {
    let unit = Exp::new(1.0).expect("unit rate");
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let signal = (1.0 + rate).ln();
    // Every label consumes the same draws so the stream position is label-independent.
    let lwp_bg: f64 = unit.sample(rng);
    let iwp_bg: f64 = unit.sample(rng);
    let cape_bg: f64 = unit.sample(rng);
    let wvp_z: f64 = std_normal.sample(rng);
    let j1 = rng.random_range(0.5..1.5);
    let j2 = rng.random_range(0.5..1.5);
    let j3 = rng.random_range(0.5..1.5);
    match label {
        PrecipLabel::None => AncillaryState {
            lwp: 0.03 * lwp_bg,
            iwp: 0.02 * iwp_bg,
            wvp: (25.0 + 10.0 * wvp_z).max(0.0),
            cape: 300.0 * cape_bg,
            t2m: rng.random_range(250.0..305.0),
        },
        PrecipLabel::Rain => AncillaryState {
            lwp: 0.03 * lwp_bg + 0.06 * signal * j1,
            iwp: 0.02 * iwp_bg + 0.03 * signal * j2,
            wvp: (45.0 + 10.0 * wvp_z).max(0.0),
            cape: 300.0 * cape_bg + 400.0 * signal * j3,
            t2m: rng.random_range(278.0..305.0),
        },
        PrecipLabel::Snow => AncillaryState {
            lwp: 0.02 * lwp_bg,
            iwp: 0.02 * iwp_bg + 0.25 * rate * j2,
            wvp: (10.0 + 4.0 * wvp_z).max(0.0),
            cape: 50.0 * cape_bg,
            t2m: rng.random_range(250.0..276.0),
        },
    }
}

/// Generates `config.n_records` records, deterministic in `config.seed`.
///
/// Records span all surface classes in `surface_mix`; use
/// [`stratify_by_surface`](super::record::stratify_by_surface) to obtain
/// per-surface databases.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<CoincidenceRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rain = LogNormal::new(config.rain_dist.mu, config.rain_dist.sigma)
        .map_err(|e| Error::Config(format!("rain_dist: {e}")))?;
    let snow = Gamma::new(config.snow_dist.shape, config.snow_dist.scale)
        .map_err(|e| Error::Config(format!("snow_dist: {e}")))?;
    let noise = Normal::new(0.0, config.tb_noise_sigma)
        .map_err(|e| Error::Config(format!("tb_noise_sigma: {e}")))?;

    let mut records = Vec::with_capacity(config.n_records);
    for _ in 0..config.n_records {
        let surface = SurfaceClass::ALL[pick(&mut rng, &config.surface_mix)];
        let mut label = [PrecipLabel::None, PrecipLabel::Rain, PrecipLabel::Snow]
            [pick(&mut rng, &config.class_priors)];
        let mut rate = match label {
            PrecipLabel::None => 0.0,
            PrecipLabel::Rain => rain.sample(&mut rng),
            PrecipLabel::Snow => snow.sample(&mut rng),
        };
        if label.is_precipitating() && rate < OCCURRENCE_THRESHOLD {
            label = PrecipLabel::None;
            rate = 0.0;
        }
        let tb = config
            .mean_tb(surface, label, rate)
            .into_iter()
            .map(|t| (t + noise.sample(&mut rng)).clamp(TB_MIN, TB_MAX))
            .collect();
        let ancillary = ancillary(&mut rng, label, rate);
        let lat = rng.random_range(-90.0..90.0);
        let lon = rng.random_range(-180.0..180.0);
        records.push(CoincidenceRecord {
            tb,
            ancillary,
            surface,
            label,
            rate,
            lat,
            lon,
            source: config.source,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> SyntheticConfig {
        SyntheticConfig {
            n_records: n,
            seed: 7,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn degenerate_prior_gives_no_precipitation() {
        let cfg = SyntheticConfig {
            class_priors: [1.0, 0.0, 0.0],
            ..small(500)
        };
        let recs = generate_synthetic(&cfg).unwrap();
        assert!(recs
            .iter()
            .all(|r| r.label == PrecipLabel::None && r.rate == 0.0));
    }

    #[test]
    fn equal_seeds_equal_output() {
        assert_eq!(
            generate_synthetic(&small(300)).unwrap(),
            generate_synthetic(&small(300)).unwrap()
        );
        let other = SyntheticConfig { seed: 8, ..small(300) };
        assert_ne!(
            generate_synthetic(&small(300)).unwrap(),
            generate_synthetic(&other).unwrap()
        );
    }

    #[test]
    fn every_record_is_valid() {
        for r in generate_synthetic(&small(5000)).unwrap() {
            r.validate().unwrap();
            if r.label.is_precipitating() {
                assert!(r.rate >= OCCURRENCE_THRESHOLD);
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = SyntheticConfig {
            class_priors: [0.7, 0.2, 0.2],
            ..small(1)
        };
        assert!(matches!(generate_synthetic(&bad), Err(Error::Config(_))));
        let bad = SyntheticConfig {
            snow_dist: GammaParams {
                shape: 0.0,
                scale: 1.0,
            },
            ..small(1)
        };
        assert!(bad.validate().is_err());
        let bad = SyntheticConfig {
            tb_noise_sigma: -1.0,
            ..small(1)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn forward_model_monotone_in_rate() {
        let cfg = SyntheticConfig::default();
        let rates: Vec<f64> = (1..200).map(|i| 0.01 * 1.05f64.powi(i)).collect();
        let low = cfg
            .channels
            .iter()
            .position(|c| c.freq_ghz <= EMISSION_MAX_GHZ)
            .unwrap();
        let high = cfg
            .channels
            .iter()
            .position(|c| c.freq_ghz >= SCATTERING_MIN_GHZ)
            .unwrap();
        for w in rates.windows(2) {
            let rain = |r| cfg.mean_tb(SurfaceClass::Ocean, PrecipLabel::Rain, r)[low];
            assert!(rain(w[1]) > rain(w[0]));
            for s in SurfaceClass::ALL {
                let snow = |r| cfg.mean_tb(*s, PrecipLabel::Snow, r)[high];
                assert!(snow(w[1]) < snow(w[0]));
            }
        }
    }

    #[test]
    fn zero_noise_records_sit_on_the_forward_model() {
        let cfg = SyntheticConfig {
            tb_noise_sigma: 0.0,
            ..small(200)
        };
        for r in generate_synthetic(&cfg).unwrap() {
            assert_eq!(r.tb, cfg.mean_tb(r.surface, r.label, r.rate));
        }
    }
}
