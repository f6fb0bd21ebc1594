//! Latitude-band rescaling of passive retrievals toward active zonal means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::grid::locate;
use crate::eval::{Grid, GridPhase, GridSample, NeumaierSum};

pub const DEFAULT_BAND_WIDTH: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalScale {
    pub phase: GridPhase,
    /// Resolution of the grids the factors were fitted on.
    pub resolution: f64,
    pub band_width: f64,
    /// `n_bands + 1` edges from -90 to 90.
    pub edges: Vec<f64>,
    pub factors: Vec<f64>,
}

impl ZonalScale {
    fn rows_per_band(&self) -> usize {
        (self.band_width / self.resolution).round() as usize
    }

    fn n_rows(&self) -> usize {
        (180.0 / self.resolution).round() as usize
    }

    /// Band containing `lat`, consistent with the grid's row assignment.
    pub fn band_of(&self, lat: f64) -> Result<usize> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::Grid(format!("latitude {lat} outside [-90, 90]")));
        }
        Ok(locate(lat, -90.0, self.resolution, self.n_rows()) / self.rows_per_band())
    }

    pub fn factor(&self, lat: f64) -> Result<f64> {
        Ok(self.factors[self.band_of(lat)?])
    }
}

/// Number of grid rows per band, checking that bands align with rows and tile
/// the latitude range.
fn band_layout(resolution: f64, band_width: f64) -> Result<(usize, usize)> {
    if !(band_width > 0.0 && band_width.is_finite()) {
        return Err(Error::Grid(format!("band width must be > 0, got {band_width}")));
    }
    let per = band_width / resolution;
    let rows_per_band = per.round();
    if rows_per_band < 1.0 || (per - rows_per_band).abs() > 1e-9 * per {
        return Err(Error::Grid(format!(
            "band width {band_width} is not a multiple of the grid resolution {resolution}"
        )));
    }
    let bands = 180.0 / band_width;
    let n_bands = bands.round();
    if (bands - n_bands).abs() > 1e-9 * bands {
        return Err(Error::Grid(format!("band width {band_width} does not divide 180")));
    }
    Ok((rows_per_band as usize, n_bands as usize))
}

/// Per band, the mean over populated cells of the cell mean rate.
pub fn band_means(grid: &Grid, band_width: f64, phase: GridPhase) -> Result<Vec<Option<f64>>> {
    let (rows_per_band, n_bands) = band_layout(grid.resolution(), band_width)?;
    let mut acc = vec![(NeumaierSum::default(), 0usize); n_bands];
    for (&(i, _), c) in grid.cells() {
        if let Some(v) = c.mean_rate(phase) {
            let b = i / rows_per_band;
            acc[b].0.add(v);
            acc[b].1 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(s, n)| (n > 0).then(|| s.value() / n as f64))
        .collect())
}

/// Per band, `active mean / passive mean`; bands with a zero or missing
/// passive mean get factor 1.
pub fn fit_zonal_scale(
    passive: &Grid,
    active: &Grid,
    band_width: f64,
    phase: GridPhase,
) -> Result<ZonalScale> {
    if passive.resolution() != active.resolution() || passive.n_rows() != active.n_rows() {
        return Err(Error::Grid("passive and active grids differ in resolution".into()));
    }
    let p = band_means(passive, band_width, phase)?;
    let a = band_means(active, band_width, phase)?;
    let factors: Vec<f64> = p
        .iter()
        .zip(&a)
        .map(|(p, a)| match (p, a) {
            (Some(p), Some(a)) if *p > 0.0 => a / p,
            (Some(p), None) if *p > 0.0 => 0.0,
            _ => 1.0,
        })
        .collect();
    if factors.iter().any(|f| !f.is_finite()) {
        return Err(Error::Fit("non-finite zonal factor".into()));
    }
    let edges = (0..=factors.len())
        .map(|b| -90.0 + b as f64 * band_width)
        .collect();
    Ok(ZonalScale {
        phase,
        resolution: passive.resolution(),
        band_width,
        edges,
        factors,
    })
}

/// Multiplies the rate of every sample belonging to the scale's phase by its
/// band factor.
pub fn apply_zonal_scale(scale: &ZonalScale, samples: &mut [GridSample]) -> Result<()> {
    for s in samples.iter_mut() {
        if scale.phase.includes(s.label) {
            s.rate *= scale.factor(s.lat)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{accumulate_grid_default, zonal_mean};
    use crate::pipeline::FusedLabel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn samples(seed: u64, n: usize) -> Vec<GridSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let snow = rng.random_bool(0.5);
                GridSample {
                    lat: rng.random_range(-90.0..90.0),
                    lon: rng.random_range(-180.0..180.0),
                    label: if snow { FusedLabel::Snow } else { FusedLabel::None },
                    rate: if snow { rng.random_range(0.01..3.0) } else { 0.0 },
                }
            })
            .collect()
    }

    #[test]
    fn uniform_scaling_and_identity() {
        let active = samples(1, 3000);
        let passive: Vec<_> = active
            .iter()
            .map(|s| GridSample { rate: 2.0 * s.rate, ..*s })
            .collect();
        let ga = accumulate_grid_default(&active, 5.0).unwrap();
        let gp = accumulate_grid_default(&passive, 5.0).unwrap();
        let z = fit_zonal_scale(&gp, &ga, 5.0, GridPhase::Snow).unwrap();
        assert!(z.factors.iter().all(|&f| (f - 0.5).abs() < 1e-12));
        let id = fit_zonal_scale(&ga, &ga, 5.0, GridPhase::Snow).unwrap();
        assert!(id.factors.iter().all(|&f| (f - 1.0).abs() < 1e-12));
    }

    #[test]
    fn closure_on_fitting_data() {
        let active = samples(2, 5000);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut passive: Vec<_> = active
            .iter()
            .map(|s| GridSample {
                rate: s.rate * rng.random_range(0.3..2.0),
                ..*s
            })
            .collect();
        let ga = accumulate_grid_default(&active, 1.0).unwrap();
        let gp = accumulate_grid_default(&passive, 1.0).unwrap();
        let z = fit_zonal_scale(&gp, &ga, 1.0, GridPhase::Snow).unwrap();
        apply_zonal_scale(&z, &mut passive).unwrap();
        let fixed = accumulate_grid_default(&passive, 1.0).unwrap();
        let want = zonal_mean(&ga, GridPhase::Snow);
        let got = zonal_mean(&fixed, GridPhase::Snow);
        for (w, g) in want.iter().zip(&got) {
            match (w, g) {
                (Some(w), Some(g)) => assert!((w - g).abs() <= 1e-10 * w.abs().max(1e-300)),
                (None, None) => {}
                (w, g) => assert!(w.unwrap_or(0.0) == 0.0 && g.unwrap_or(0.0) == 0.0),
            }
        }
    }

    #[test]
    fn degenerate_band_and_zero_rate() {
        let active = vec![GridSample {
            lat: 12.0,
            lon: 0.0,
            label: FusedLabel::Snow,
            rate: 1.0,
        }];
        let mut passive = vec![GridSample { rate: 0.0, label: FusedLabel::None, ..active[0] }];
        let ga = accumulate_grid_default(&active, 5.0).unwrap();
        let gp = accumulate_grid_default(&passive, 5.0).unwrap();
        let z = fit_zonal_scale(&gp, &ga, 5.0, GridPhase::Snow).unwrap();
        assert!(z.factors.iter().all(|&f| f == 1.0));
        apply_zonal_scale(&z, &mut passive).unwrap();
        assert_eq!(passive[0].rate, 0.0);
        assert_eq!(z.edges.len(), 37);
    }

    #[test]
    fn misaligned_bands_rejected() {
        let g = Grid::new(2.0, 0.01).unwrap();
        assert!(band_means(&g, 5.0, GridPhase::Snow).is_err());
        assert!(fit_zonal_scale(&g, &Grid::new(1.0, 0.01).unwrap(), 2.0, GridPhase::Snow).is_err());
    }
}
