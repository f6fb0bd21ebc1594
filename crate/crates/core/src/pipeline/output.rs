//! Retrieval CSV files.

use std::io::{Read, Write};

use super::fusion::{FusedLabel, FusedRetrieval};
use super::retrieval::PixelRetrieval;
use crate::data::{PrecipLabel, RadarSource};
use crate::error::{Error, Result};

pub const RETRIEVAL_HEADER: [&str; 9] = [
    "lat", "lon", "source", "label", "rate", "estimated", "p_none", "p_snow", "p_rain",
];

pub const FUSED_HEADER: [&str; 6] = ["lat", "lon", "label", "rate", "estimated", "contributors"];

/// A retrieval paired with its pixel location.
#[derive(Debug, Clone, PartialEq)]
pub struct LocatedRetrieval {
    pub lat: f64,
    pub lon: f64,
    pub retrieval: PixelRetrieval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocatedFusion {
    pub lat: f64,
    pub lon: f64,
    pub fused: FusedRetrieval,
}

pub fn write_retrieval_csv<W: Write>(out: W, rows: &[LocatedRetrieval]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RETRIEVAL_HEADER)?;
    for r in rows {
        let p = &r.retrieval;
        w.write_record([
            r.lat.to_string(),
            r.lon.to_string(),
            p.source.to_string(),
            p.label.to_string(),
            p.rate.to_string(),
            p.estimated.to_string(),
            p.probs[0].to_string(),
            p.probs[1].to_string(),
            p.probs[2].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fused_csv<W: Write>(out: W, rows: &[LocatedFusion]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FUSED_HEADER)?;
    for r in rows {
        let f = &r.fused;
        let contributors: Vec<&str> = f.contributors.iter().map(|s| s.as_str()).collect();
        w.write_record([
            r.lat.to_string(),
            r.lon.to_string(),
            f.label.to_string(),
            f.rate.to_string(),
            f.estimated.to_string(),
            contributors.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Minimal view of a retrieval row shared by plain and fused files.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRow {
    pub lat: f64,
    pub lon: f64,
    pub label: FusedLabel,
    pub rate: f64,
}

/// Reads either retrieval layout, detected from the header.
pub fn read_retrieval_rows<R: Read>(input: R) -> Result<Vec<RetrievalRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let plain = header == RETRIEVAL_HEADER;
    if !plain && header != FUSED_HEADER {
        return Err(Error::Schema(format!("unrecognized retrieval header {header:?}")));
    }
    let (label_col, rate_col) = if plain { (3, 4) } else { (2, 3) };
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize| {
            field(j).parse::<f64>().map_err(|_| Error::Parse {
                row: line,
                msg: format!("column {} is not a number: {:?}", header[j], field(j)),
            })
        };
        let label = if plain {
            field(label_col)
                .parse::<PrecipLabel>()
                .map(FusedLabel::from)
        } else {
            field(label_col).parse::<FusedLabel>()
        }
        .map_err(|e| Error::Parse {
            row: line,
            msg: e.to_string(),
        })?;
        if plain {
            field(2).parse::<RadarSource>().map_err(|e| Error::Parse {
                row: line,
                msg: e.to_string(),
            })?;
        }
        rows.push(RetrievalRow {
            lat: num(0)?,
            lon: num(1)?,
            label,
            rate: num(rate_col)?,
        });
    }
    Ok(rows)
}
