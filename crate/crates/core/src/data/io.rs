//! Database file formats.
//!
//! CSV: header `tb_01,...,tb_NN,lwp,iwp,wvp,cape,t2m,surface,label,rate,lat,lon,source`,
//! floats written in shortest round-trip form.
//!
//! Binary: magic `PRDB`, version u16, n_channels u16, record count u64, then
//! fixed-width little-endian records in CSV field order (f64 floats, u8 enums).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{
    AncillaryState, CoincidenceRecord, PrecipDatabase, PrecipLabel, RadarSource, SurfaceClass,
};
use crate::error::{Error, Result};

pub const DB_MAGIC: &[u8; 4] = b"PRDB";
pub const DB_VERSION: u16 = 1;

const TRAILING_COLUMNS: [&str; 11] = [
    "lwp", "iwp", "wvp", "cape", "t2m", "surface", "label", "rate", "lat", "lon", "source",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DbFormat {
    Csv,
    Binary,
}

impl DbFormat {
    /// `.csv` maps to CSV, anything else to binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DbFormat::Csv,
            _ => DbFormat::Binary,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DbFormat::Csv => "csv",
            DbFormat::Binary => "bin",
        }
    }
}

/// Records read from a file before stratum checks, for inputs that may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    pub n_channels: usize,
    pub records: Vec<CoincidenceRecord>,
}

pub fn csv_header(n_channels: usize) -> Vec<String> {
    let width = n_channels.to_string().len().max(2);
    (1..=n_channels)
        .map(|i| format!("tb_{i:0width$}"))
        .chain(TRAILING_COLUMNS.iter().map(|s| s.to_string()))
        .collect()
}

/// Loads and validates a single-stratum database.
pub fn load_database(path: &Path, format: DbFormat) -> Result<PrecipDatabase> {
    let file = load_records(path, format)?;
    if file.records.is_empty() {
        return Err(Error::Schema(format!(
            "{} holds no records; a database needs at least one to fix its stratum",
            path.display()
        )));
    }
    PrecipDatabase::new(
        file.records[0].source,
        file.records[0].surface,
        file.n_channels,
        file.records,
    )
}

/// Loads records without requiring a shared stratum. Each record is validated.
pub fn load_records(path: &Path, format: DbFormat) -> Result<RecordFile> {
    let file = match format {
        DbFormat::Csv => read_csv(BufReader::new(File::open(path)?))?,
        DbFormat::Binary => read_binary(&mut BufReader::new(File::open(path)?))?,
    };
    for (i, r) in file.records.iter().enumerate() {
        r.validate().map_err(|e| match e {
            Error::Validation { field, msg } => Error::Validation {
                field,
                msg: format!("record {}: {msg}", i + 1),
            },
            other => other,
        })?;
    }
    Ok(file)
}

pub fn save_database(db: &PrecipDatabase, path: &Path, format: DbFormat) -> Result<()> {
    save_records(db.records(), db.n_channels(), path, format)
}

pub fn save_records(
    records: &[CoincidenceRecord],
    n_channels: usize,
    path: &Path,
    format: DbFormat,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        DbFormat::Csv => write_csv(&mut out, records, n_channels)?,
        DbFormat::Binary => write_binary(&mut out, records, n_channels)?,
    }
    out.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(out: W, records: &[CoincidenceRecord], n_channels: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(n_channels))?;
    let mut row: Vec<String> = Vec::with_capacity(n_channels + TRAILING_COLUMNS.len());
    for r in records {
        if r.n_channels() != n_channels {
            return Err(Error::Schema(format!(
                "record has {} channels, file has {n_channels}",
                r.n_channels()
            )));
        }
        row.clear();
        row.extend(r.tb.iter().map(|t| t.to_string()));
        row.extend(r.ancillary.to_array().iter().map(|v| v.to_string()));
        row.push(r.surface.to_string());
        row.push(r.label.to_string());
        row.push(r.rate.to_string());
        row.push(r.lat.to_string());
        row.push(r.lon.to_string());
        row.push(r.source.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<RecordFile> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let n_cols = header.len();
    if n_cols <= TRAILING_COLUMNS.len() {
        return Err(Error::Schema(format!("header has only {n_cols} columns")));
    }
    let n_channels = n_cols - TRAILING_COLUMNS.len();
    let expected = csv_header(n_channels);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Schema(format!(
            "unexpected header `{}`; expected `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            expected.join(",")
        )));
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            row: line,
            msg: e.to_string(),
        })?;
        let float = |col: usize| -> Result<f64> {
            row[col].trim().parse::<f64>().map_err(|e| Error::Parse {
                row: line,
                msg: format!("column `{}`: {e}", expected[col]),
            })
        };
        let tb = (0..n_channels).map(float).collect::<Result<Vec<_>>>()?;
        let c = n_channels;
        let ancillary = AncillaryState {
            lwp: float(c)?,
            iwp: float(c + 1)?,
            wvp: float(c + 2)?,
            cape: float(c + 3)?,
            t2m: float(c + 4)?,
        };
        let parse_enum_err = |e: Error| match e {
            Error::Validation { field, msg } => Error::Parse {
                row: line,
                msg: format!("{field}: {msg}"),
            },
            other => other,
        };
        let surface: SurfaceClass = row[c + 5].trim().parse().map_err(parse_enum_err)?;
        let label: PrecipLabel = row[c + 6].trim().parse().map_err(parse_enum_err)?;
        let rate = float(c + 7)?;
        let lat = float(c + 8)?;
        let lon = float(c + 9)?;
        let source: RadarSource = row[c + 10].trim().parse().map_err(parse_enum_err)?;
        records.push(CoincidenceRecord {
            tb,
            ancillary,
            surface,
            label,
            rate,
            lat,
            lon,
            source,
        });
    }
    Ok(RecordFile {
        n_channels,
        records,
    })
}

pub fn write_binary<W: Write>(
    out: &mut W,
    records: &[CoincidenceRecord],
    n_channels: usize,
) -> Result<()> {
    let n16 = u16::try_from(n_channels)
        .map_err(|_| Error::Schema(format!("{n_channels} channels exceed u16")))?;
    out.write_all(DB_MAGIC)?;
    out.write_all(&DB_VERSION.to_le_bytes())?;
    out.write_all(&n16.to_le_bytes())?;
    out.write_all(&(records.len() as u64).to_le_bytes())?;
    for r in records {
        if r.n_channels() != n_channels {
            return Err(Error::Schema(format!(
                "record has {} channels, file has {n_channels}",
                r.n_channels()
            )));
        }
        for t in &r.tb {
            out.write_all(&t.to_le_bytes())?;
        }
        for v in r.ancillary.to_array() {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&[r.surface.code(), r.label.code()])?;
        out.write_all(&r.rate.to_le_bytes())?;
        out.write_all(&r.lat.to_le_bytes())?;
        out.write_all(&r.lon.to_le_bytes())?;
        out.write_all(&[r.source.code()])?;
    }
    Ok(())
}

fn read_f64<R: Read>(input: &mut R) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_u8<R: Read>(input: &mut R) -> std::io::Result<u8> {
    let mut buf = [0u8; 1];
    input.read_exact(&mut buf)?;
    Ok(buf[0])
}

pub fn read_binary<R: Read>(input: &mut R) -> Result<RecordFile> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != DB_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut b2 = [0u8; 2];
    input.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != DB_VERSION {
        return Err(Error::Format(format!("unsupported database version {version}")));
    }
    input.read_exact(&mut b2)?;
    let n_channels = u16::from_le_bytes(b2) as usize;
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;

    let mut records = Vec::with_capacity(count.min(1 << 24));
    for i in 0..count {
        let row = i + 1;
        let truncated = |e: std::io::Error| Error::Parse {
            row,
            msg: format!("truncated record: {e}"),
        };
        let tb = (0..n_channels)
            .map(|_| read_f64(input))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(truncated)?;
        let mut anc = [0.0; 5];
        for v in anc.iter_mut() {
            *v = read_f64(input).map_err(truncated)?;
        }
        let surface_code = read_u8(input).map_err(truncated)?;
        let label_code = read_u8(input).map_err(truncated)?;
        let rate = read_f64(input).map_err(truncated)?;
        let lat = read_f64(input).map_err(truncated)?;
        let lon = read_f64(input).map_err(truncated)?;
        let source_code = read_u8(input).map_err(truncated)?;
        let bad_code = |e: Error| Error::Parse {
            row,
            msg: e.to_string(),
        };
        records.push(CoincidenceRecord {
            tb,
            ancillary: AncillaryState {
                lwp: anc[0],
                iwp: anc[1],
                wvp: anc[2],
                cape: anc[3],
                t2m: anc[4],
            },
            surface: SurfaceClass::from_code(surface_code).map_err(bad_code)?,
            label: PrecipLabel::from_code(label_code).map_err(bad_code)?,
            rate,
            lat,
            lon,
            source: RadarSource::from_code(source_code).map_err(bad_code)?,
        });
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok(RecordFile {
        n_channels,
        records,
    })
}
