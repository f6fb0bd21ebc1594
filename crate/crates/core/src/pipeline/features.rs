//! Network input assembly.

use ndarray::Array2;

use crate::data::{CoincidenceRecord, PrecipLabel, N_ANCILLARY};
use crate::error::{Error, Result};
use crate::knn::NeighborIndex;

/// Number of detection classes.
pub const N_CLASSES: usize = 3;

/// Position of each label in the detector's output vector: (none, snow, rain).
pub fn class_index(label: PrecipLabel) -> usize {
    match label {
        PrecipLabel::None => 0,
        PrecipLabel::Snow => 1,
        PrecipLabel::Rain => 2,
    }
}

pub fn class_label(index: usize) -> PrecipLabel {
    match index {
        0 => PrecipLabel::None,
        1 => PrecipLabel::Snow,
        2 => PrecipLabel::Rain,
        _ => panic!("class index {index} out of range"),
    }
}

pub fn one_hot(label: PrecipLabel) -> [f64; N_CLASSES] {
    let mut t = [0.0; N_CLASSES];
    t[class_index(label)] = 1.0;
    t
}

/// Brightness temperatures followed by lwp, iwp, wvp, cape, t2m.
pub fn detection_features(record: &CoincidenceRecord) -> Vec<f64> {
    let mut v = Vec::with_capacity(record.tb.len() + N_ANCILLARY);
    v.extend_from_slice(&record.tb);
    v.extend_from_slice(&record.ancillary.to_array());
    v
}

/// Brightness temperatures followed by the rates of the `k` nearest database
/// records, nearest first. `exclude` drops one database record from the
/// search, used when the record is itself a member of the index.
pub fn estimation_features(
    tb: &[f64],
    index: &NeighborIndex,
    k: usize,
    exclude: Option<usize>,
) -> Result<Vec<f64>> {
    let set = index.query_excluding(tb, k, exclude)?;
    if set.len() < k {
        return Err(Error::Query(format!(
            "index holds {} usable records, need k = {k}",
            set.len()
        )));
    }
    let mut v = Vec::with_capacity(tb.len() + k);
    v.extend_from_slice(tb);
    v.extend(set.iter().map(|n| n.rate));
    Ok(v)
}

pub fn detection_matrix<'a, I>(records: I, n_channels: usize) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = &'a CoincidenceRecord>,
{
    rows_to_matrix(
        records.into_iter().map(|r| Ok(detection_features(r))),
        n_channels + N_ANCILLARY,
    )
}

/// One-hot detection targets.
pub fn detection_targets<'a, I>(records: I) -> Array2<f64>
where
    I: IntoIterator<Item = &'a CoincidenceRecord>,
{
    let rows: Vec<[f64; N_CLASSES]> = records.into_iter().map(|r| one_hot(r.label)).collect();
    Array2::from_shape_fn((rows.len(), N_CLASSES), |(i, j)| rows[i][j])
}

/// Estimation features for `(record, exclude)` pairs.
pub fn estimation_matrix<'a, I>(items: I, index: &NeighborIndex, k: usize) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = (&'a CoincidenceRecord, Option<usize>)>,
{
    rows_to_matrix(
        items
            .into_iter()
            .map(|(r, ex)| estimation_features(&r.tb, index, k, ex)),
        index.n_channels() + k,
    )
}

fn rows_to_matrix<I>(rows: I, width: usize) -> Result<Array2<f64>>
where
    I: Iterator<Item = Result<Vec<f64>>>,
{
    let mut flat = Vec::new();
    let mut n = 0;
    for row in rows {
        let row = row?;
        if row.len() != width {
            return Err(Error::Shape(format!(
                "feature row has {} entries, expected {width}",
                row.len()
            )));
        }
        flat.extend(row);
        n += 1;
    }
    Array2::from_shape_vec((n, width), flat).map_err(|e| Error::Shape(e.to_string()))
}
