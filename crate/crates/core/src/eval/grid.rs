//! Latitude-longitude accumulation of retrievals.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::OCCURRENCE_THRESHOLD;
use crate::error::{Error, Result};
use crate::pipeline::FusedLabel;

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPhase {
    Rain,
    Snow,
    /// Every precipitating retrieval, including mixed-phase pixels.
    All,
}

impl GridPhase {
    pub const ALL: [GridPhase; 3] = [GridPhase::Rain, GridPhase::Snow, GridPhase::All];

    pub fn as_str(self) -> &'static str {
        match self {
            GridPhase::Rain => "rain",
            GridPhase::Snow => "snow",
            GridPhase::All => "all",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }

    pub fn includes(self, label: FusedLabel) -> bool {
        match self {
            GridPhase::Rain => label == FusedLabel::Rain,
            GridPhase::Snow => label == FusedLabel::Snow,
            GridPhase::All => label.is_precipitating(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub lat: f64,
    pub lon: f64,
    pub label: FusedLabel,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseLedger {
    pub occurrence: u64,
    pub sum: NeumaierSum,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridCell {
    /// Retrievals of any label that landed in the cell.
    pub n_samples: u64,
    pub phases: [PhaseLedger; 3],
}

impl GridCell {
    pub fn ledger(&self, phase: GridPhase) -> &PhaseLedger {
        &self.phases[phase.slot()]
    }

    /// Phase rate sum divided by the cell's sample count.
    pub fn mean_rate(&self, phase: GridPhase) -> Option<f64> {
        (self.n_samples > 0).then(|| self.ledger(phase).sum.value() / self.n_samples as f64)
    }
}

/// Sparse grid of cells; cell `(i, j)` covers latitudes
/// `[-90 + i res, -90 + (i + 1) res)` and longitudes `[-180 + j res, ...)`,
/// with the northern and eastern domain edges closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    resolution: f64,
    n_rows: usize,
    n_cols: usize,
    occurrence_threshold: f64,
    cells: BTreeMap<(usize, usize), GridCell>,
}

impl Grid {
    pub fn new(resolution: f64, occurrence_threshold: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Grid(format!("resolution must be > 0, got {resolution}")));
        }
        let rows = 180.0 / resolution;
        let n_rows = rows.round();
        if (rows - n_rows).abs() > 1e-9 * rows.max(1.0) || n_rows < 1.0 {
            return Err(Error::Grid(format!("resolution {resolution} does not divide 180")));
        }
        if !(occurrence_threshold >= 0.0) {
            return Err(Error::Grid("occurrence threshold must be >= 0".into()));
        }
        Ok(Self {
            resolution,
            n_rows: n_rows as usize,
            n_cols: 2 * n_rows as usize,
            occurrence_threshold,
            cells: BTreeMap::new(),
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn occurrence_threshold(&self) -> f64 {
        self.occurrence_threshold
    }

    pub fn cells(&self) -> &BTreeMap<(usize, usize), GridCell> {
        &self.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&GridCell> {
        self.cells.get(&(row, col))
    }

    pub fn lat_edge(&self, row: usize) -> f64 {
        -90.0 + row as f64 * self.resolution
    }

    pub fn lon_edge(&self, col: usize) -> f64 {
        -180.0 + col as f64 * self.resolution
    }

    pub fn row_of(&self, lat: f64) -> Result<usize> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Grid(format!("latitude {lat} outside [-90, 90]")));
        }
        Ok(locate(lat, -90.0, self.resolution, self.n_rows))
    }

    pub fn col_of(&self, lon: f64) -> Result<usize> {
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::Grid(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(locate(lon, -180.0, self.resolution, self.n_cols))
    }

    pub fn add(&mut self, s: &GridSample) -> Result<()> {
        if !(s.rate >= 0.0 && s.rate.is_finite()) {
            return Err(Error::Grid(format!("rate must be finite and >= 0, got {}", s.rate)));
        }
        let key = (self.row_of(s.lat)?, self.col_of(s.lon)?);
        let threshold = self.occurrence_threshold;
        let cell = self.cells.entry(key).or_default();
        cell.n_samples += 1;
        for phase in GridPhase::ALL {
            if phase.includes(s.label) {
                let l = &mut cell.phases[phase.slot()];
                l.sum.add(s.rate);
                if s.rate > threshold {
                    l.occurrence += 1;
                }
            }
        }
        Ok(())
    }

    /// Cell-wise addition of a grid with identical geometry.
    pub fn merge(&mut self, other: &Grid) -> Result<()> {
        if self.n_rows != other.n_rows || self.occurrence_threshold != other.occurrence_threshold {
            return Err(Error::Grid("grids differ in resolution or threshold".into()));
        }
        for (key, c) in &other.cells {
            let cell = self.cells.entry(*key).or_default();
            cell.n_samples += c.n_samples;
            for (a, b) in cell.phases.iter_mut().zip(&c.phases) {
                a.occurrence += b.occurrence;
                a.sum.merge(&b.sum);
            }
        }
        Ok(())
    }

    pub fn total(&self, phase: GridPhase) -> f64 {
        let mut s = NeumaierSum::default();
        for c in self.cells.values() {
            s.merge(&c.ledger(phase).sum);
        }
        s.value()
    }

    /// Writes `lat_index,lon_index,lat_center,lon_center,phase,occurrence,sum_rate,n_samples`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "lat_index",
            "lon_index",
            "lat_center",
            "lon_center",
            "phase",
            "occurrence",
            "sum_rate",
            "n_samples",
        ])?;
        let half = self.resolution / 2.0;
        for (&(i, j), c) in &self.cells {
            for phase in GridPhase::ALL {
                let l = c.ledger(phase);
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    (self.lat_edge(i) + half).to_string(),
                    (self.lon_edge(j) + half).to_string(),
                    phase.as_str().to_string(),
                    l.occurrence.to_string(),
                    l.sum.value().to_string(),
                    c.n_samples.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Index `i` with `origin + i res <= x < origin + (i + 1) res`, computed
/// against the same edge expressions used elsewhere; the top edge maps to the
/// last cell.
pub(crate) fn locate(x: f64, origin: f64, res: f64, n: usize) -> usize {
    let edge = |i: usize| origin + i as f64 * res;
    let mut i = (((x - origin) / res).floor().max(0.0) as usize).min(n - 1);
    while i > 0 && x < edge(i) {
        i -= 1;
    }
    while i + 1 < n && x >= edge(i + 1) {
        i += 1;
    }
    i
}

pub fn accumulate_grid(samples: &[GridSample], resolution: f64, occurrence_threshold: f64) -> Result<Grid> {
    let mut g = Grid::new(resolution, occurrence_threshold)?;
    for s in samples {
        g.add(s)?;
    }
    Ok(g)
}

/// Same as [`accumulate_grid`] with the default 0.01 mm/hr occurrence threshold.
pub fn accumulate_grid_default(samples: &[GridSample], resolution: f64) -> Result<Grid> {
    accumulate_grid(samples, resolution, OCCURRENCE_THRESHOLD)
}

/// Per latitude row, the mean over populated cells of the cell mean rate;
/// rows without populated cells are absent.
pub fn zonal_mean(grid: &Grid, phase: GridPhase) -> Vec<Option<f64>> {
    let mut acc = vec![(NeumaierSum::default(), 0usize); grid.n_rows];
    for (&(i, _), c) in &grid.cells {
        if let Some(v) = c.mean_rate(phase) {
            acc[i].0.add(v);
            acc[i].1 += 1;
        }
    }
    acc.into_iter()
        .map(|(s, n)| (n > 0).then(|| s.value() / n as f64))
        .collect()
}
