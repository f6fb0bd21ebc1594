//! Checksums and JSON manifests written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;

use precip_core::data::{CoincidenceRecord, PrecipLabel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn sha256_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

/// Checksums of every regular file in `dir`, keyed by file name.
pub fn dir_checksums(dir: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            out.insert(entry.file_name().to_string_lossy().into_owned(), sha256_file(&path)?);
        }
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(precip_core::Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text).map_err(precip_core::Error::from)?)
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub none: usize,
    pub rain: usize,
    pub snow: usize,
}

impl LabelCounts {
    pub fn of(records: &[CoincidenceRecord]) -> Self {
        let mut c = Self::default();
        for r in records {
            match r.label {
                PrecipLabel::None => c.none += 1,
                PrecipLabel::Rain => c.rain += 1,
                PrecipLabel::Snow => c.snow += 1,
            }
        }
        c
    }
}
