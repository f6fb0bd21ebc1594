use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Valid brightness temperature range, Kelvin.
pub const TB_MIN: f64 = 50.0;
pub const TB_MAX: f64 = 350.0;

/// Rates at or below this value (mm/hr) are not counted as precipitation.
pub const OCCURRENCE_THRESHOLD: f64 = 0.01;

/// Number of ancillary state variables carried by every record.
pub const N_ANCILLARY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceClass {
    Ocean,
    Land,
    Coast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecipLabel {
    None,
    Rain,
    Snow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadarSource {
    Dpr,
    Cpr,
}

macro_rules! string_enum {
    ($ty:ident, $field:literal, { $($variant:ident => $name:literal = $code:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }

            pub fn code(self) -> u8 {
                match self {
                    $($ty::$variant => $code),+
                }
            }

            pub fn from_code(code: u8) -> Result<Self> {
                match code {
                    $($code => Ok($ty::$variant),)+
                    other => Err(Error::Validation {
                        field: $field,
                        msg: format!("unknown code {other}"),
                    }),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::Validation {
                        field: $field,
                        msg: format!("unknown value `{other}`"),
                    }),
                }
            }
        }
    };
}

string_enum!(SurfaceClass, "surface", {
    Ocean => "ocean" = 0,
    Land => "land" = 1,
    Coast => "coast" = 2,
});

string_enum!(PrecipLabel, "label", {
    None => "none" = 0,
    Rain => "rain" = 1,
    Snow => "snow" = 2,
});

string_enum!(RadarSource, "source", {
    Dpr => "dpr" = 0,
    Cpr => "cpr" = 1,
});

impl PrecipLabel {
    pub fn is_precipitating(self) -> bool {
        self != PrecipLabel::None
    }
}

/// Ancillary atmospheric state attached to a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AncillaryState {
    /// Cloud liquid water path, kg/m².
    pub lwp: f64,
    /// Cloud ice water path, kg/m².
    pub iwp: f64,
    /// Total columnar water vapor, kg/m².
    pub wvp: f64,
    /// Convective available potential energy, J/kg.
    pub cape: f64,
    /// 2-m air temperature, K.
    pub t2m: f64,
}

impl AncillaryState {
    /// Values in feature order: lwp, iwp, wvp, cape, t2m.
    pub fn to_array(&self) -> [f64; N_ANCILLARY] {
        [self.lwp, self.iwp, self.wvp, self.cape, self.t2m]
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("lwp", self.lwp),
            ("iwp", self.iwp),
            ("wvp", self.wvp),
            ("cape", self.cape),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation {
                    field,
                    msg: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if !(180.0..=340.0).contains(&self.t2m) {
            return Err(Error::Validation {
                field: "t2m",
                msg: format!("must lie in [180, 340] K, got {}", self.t2m),
            });
        }
        Ok(())
    }
}

/// One pixel-level pairing of radiometer brightness temperatures with a
/// radar precipitation label and rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRecord {
    /// Brightness temperatures ordered by ascending channel frequency, K.
    pub tb: Vec<f64>,
    pub ancillary: AncillaryState,
    pub surface: SurfaceClass,
    pub label: PrecipLabel,
    /// Near-surface precipitation rate, mm/hr.
    pub rate: f64,
    pub lat: f64,
    pub lon: f64,
    pub source: RadarSource,
}

impl CoincidenceRecord {
    pub fn n_channels(&self) -> usize {
        self.tb.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tb.is_empty() {
            return Err(Error::Validation {
                field: "tb",
                msg: "no channels".into(),
            });
        }
        for (i, &t) in self.tb.iter().enumerate() {
            if !(TB_MIN..=TB_MAX).contains(&t) {
                return Err(Error::Validation {
                    field: "tb",
                    msg: format!("channel {} = {t} K outside [{TB_MIN}, {TB_MAX}]", i + 1),
                });
            }
        }
        self.ancillary.validate()?;
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::Validation {
                field: "rate",
                msg: format!("must be finite and >= 0, got {}", self.rate),
            });
        }
        if (self.rate == 0.0) != (self.label == PrecipLabel::None) {
            return Err(Error::Validation {
                field: "rate",
                msg: format!(
                    "rate {} inconsistent with label {} (rate is 0 iff label is none)",
                    self.rate, self.label
                ),
            });
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::Validation {
                field: "lat",
                msg: format!("{} outside [-90, 90]", self.lat),
            });
        }
        if !(-180.0..180.0).contains(&self.lon) {
            return Err(Error::Validation {
                field: "lon",
                msg: format!("{} outside [-180, 180)", self.lon),
            });
        }
        Ok(())
    }
}

/// Immutable collection of records sharing one radar source and surface class.
///
/// Record position is the record's identity; it breaks distance ties in
/// neighbor search.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecipDatabase {
    records: Vec<CoincidenceRecord>,
    source: RadarSource,
    surface: SurfaceClass,
    n_channels: usize,
}

impl PrecipDatabase {
    /// Builds a database, validating every record and the shared-stratum invariants.
    pub fn new(
        source: RadarSource,
        surface: SurfaceClass,
        n_channels: usize,
        records: Vec<CoincidenceRecord>,
    ) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::Schema("n_channels must be >= 1".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if r.source != source || r.surface != surface {
                return Err(Error::Schema(format!(
                    "record {i} is {}/{} but database is {source}/{surface}",
                    r.source, r.surface
                )));
            }
            if r.n_channels() != n_channels {
                return Err(Error::Schema(format!(
                    "record {i} has {} channels, expected {n_channels}",
                    r.n_channels()
                )));
            }
            r.validate()?;
        }
        Ok(Self {
            records,
            source,
            surface,
            n_channels,
        })
    }

    /// Infers source, surface, and channel count from the first record.
    pub fn from_records(records: Vec<CoincidenceRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Schema("cannot infer stratum of an empty record list".into()))?;
        let (source, surface, n) = (first.source, first.surface, first.n_channels());
        Self::new(source, surface, n, records)
    }

    pub fn records(&self) -> &[CoincidenceRecord] {
        &self.records
    }

    pub fn get(&self, index: usize) -> Option<&CoincidenceRecord> {
        self.records.get(index)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn source(&self) -> RadarSource {
        self.source
    }

    pub fn surface(&self) -> SurfaceClass {
        self.surface
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn into_records(self) -> Vec<CoincidenceRecord> {
        self.records
    }

    /// Records with the given label, in database order.
    pub fn with_label(&self, label: PrecipLabel) -> impl Iterator<Item = &CoincidenceRecord> {
        self.records.iter().filter(move |r| r.label == label)
    }

    /// A database over the same stratum holding the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            source: self.source,
            surface: self.surface,
            n_channels: self.n_channels,
        }
    }
}

/// Splits a mixed record list into one database per surface class, preserving
/// relative order. Surfaces with no records are omitted.
pub fn stratify_by_surface(records: Vec<CoincidenceRecord>) -> Result<Vec<PrecipDatabase>> {
    let mut buckets: Vec<(SurfaceClass, Vec<CoincidenceRecord>)> = SurfaceClass::ALL
        .iter()
        .map(|&s| (s, Vec::new()))
        .collect();
    for r in records {
        let slot = buckets
            .iter_mut()
            .find(|(s, _)| *s == r.surface)
            .expect("every surface has a bucket");
        slot.1.push(r);
    }
    buckets
        .into_iter()
        .filter(|(_, recs)| !recs.is_empty())
        .map(|(_, recs)| PrecipDatabase::from_records(recs))
        .collect()
}
