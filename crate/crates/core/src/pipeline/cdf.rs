//! CDF matching: a monotone piecewise-linear map between quantiles of a
//! retrieved rate sample and a reference sample.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::quantile_sorted;

pub const DEFAULT_KNOTS: usize = 99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfMap {
    source: Vec<f64>,
    reference: Vec<f64>,
}

impl CdfMap {
    /// Knot vectors must have equal length ≥ 2, be finite and non-decreasing.
    pub fn new(source: Vec<f64>, reference: Vec<f64>) -> Result<Self> {
        if source.len() != reference.len() || source.len() < 2 {
            return Err(Error::Fit(format!(
                "need two equal-length knot vectors of length >= 2, got {} and {}",
                source.len(),
                reference.len()
            )));
        }
        for knots in [&source, &reference] {
            if knots.iter().any(|v| !v.is_finite()) {
                return Err(Error::Fit("non-finite knot".into()));
            }
            if knots.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Fit("knots must be non-decreasing".into()));
            }
        }
        Ok(Self { source, reference })
    }

    pub fn source_knots(&self) -> &[f64] {
        &self.source
    }

    pub fn reference_knots(&self) -> &[f64] {
        &self.reference
    }

    /// Linear interpolation between knot pairs, linear extension beyond the
    /// outermost knots using the nearest non-degenerate segment, clamped at 0.
    /// A value equal to a run of tied source knots maps to the mean of their
    /// reference knots.
    pub fn apply(&self, x: f64) -> f64 {
        let s = &self.source;
        let r = &self.reference;
        let n = s.len();
        let (lo, hi) = (s.partition_point(|&v| v < x), s.partition_point(|&v| v <= x));
        let y = if hi - lo >= 2 {
            r[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        } else if x <= s[0] {
            r[0] + self.edge_slope(true) * (x - s[0])
        } else if x >= s[n - 1] {
            r[n - 1] + self.edge_slope(false) * (x - s[n - 1])
        } else {
            // s[j - 1] <= x < s[j], so the segment has positive width.
            let j = s.partition_point(|&v| v <= x);
            let t = (x - s[j - 1]) / (s[j] - s[j - 1]);
            r[j - 1] + t * (r[j] - r[j - 1])
        };
        y.max(0.0)
    }

    fn edge_slope(&self, lower: bool) -> f64 {
        let segments = self.source.windows(2).zip(self.reference.windows(2));
        let slope = |(s, r): (&[f64], &[f64])| (s[1] > s[0]).then(|| (r[1] - r[0]) / (s[1] - s[0]));
        let found = if lower {
            segments.filter_map(slope).next()
        } else {
            segments.filter_map(slope).last()
        };
        found.unwrap_or(1.0)
    }

    /// Writes `source,reference` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "reference"])?;
        for (s, r) in self.source.iter().zip(&self.reference) {
            w.write_record([s.to_string(), r.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["source", "reference"] {
            return Err(Error::Schema(format!("unexpected CDF map header {header:?}")));
        }
        let (mut source, mut reference) = (Vec::new(), Vec::new());
        for (i, row) in rd.records().enumerate() {
            let row = row?;
            let parse = |j: usize| {
                row.get(j)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        row: i + 2,
                        msg: format!("column {} is not a number", j + 1),
                    })
            };
            source.push(parse(0)?);
            reference.push(parse(1)?);
        }
        Self::new(source, reference)
    }
}

/// Quantile knots at levels `j / (n_knots + 1)`, `j = 1..=n_knots`, of the
/// non-negative values of each sample, plus one anchor beyond each end knot at
/// the pair of tail means. The anchors set the extension slopes so that the
/// mapped tails of the fitting sample keep the reference tail means.
pub fn fit_cdf_map(retrieved: &[f64], reference: &[f64], n_knots: usize) -> Result<CdfMap> {
    if n_knots < 2 {
        return Err(Error::Fit(format!("n_knots must be >= 2, got {n_knots}")));
    }
    let sorted = |sample: &[f64], what: &str| -> Result<Vec<f64>> {
        let mut pos: Vec<f64> = sample.iter().copied().filter(|&v| v >= 0.0).collect();
        if !pos.iter().any(|&v| v > 0.0) {
            return Err(Error::Fit(format!("{what} sample has no positive rates")));
        }
        if pos.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit(format!("{what} sample has non-finite rates")));
        }
        pos.sort_by(f64::total_cmp);
        Ok(pos)
    };
    let src = sorted(retrieved, "retrieved")?;
    let refs = sorted(reference, "reference")?;
    let knots = |pos: &[f64]| -> Vec<f64> {
        (1..=n_knots)
            .map(|j| quantile_sorted(pos, j as f64 / (n_knots + 1) as f64))
            .collect()
    };
    let (mut source, mut target) = (knots(&src), knots(&refs));
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let (s0, r0) = (source[0], target[0]);
    let below = |pos: &[f64], edge: f64| mean(&pos[..pos.partition_point(|&v| v < edge)]);
    if let (Some(s), Some(r)) = (below(&src, s0), below(&refs, r0)) {
        if s < s0 {
            source.insert(0, s);
            target.insert(0, r);
        }
    }
    let (sn, rn) = (source[source.len() - 1], target[target.len() - 1]);
    let above = |pos: &[f64], edge: f64| mean(&pos[pos.partition_point(|&v| v <= edge)..]);
    if let (Some(s), Some(r)) = (above(&src, sn), above(&refs, rn)) {
        if s > sn {
            source.push(s);
            target.push(r);
        }
    }
    CdfMap::new(source, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, LogNormal};

    fn lognormal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = LogNormal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn identical_samples_give_identity() {
        let x = lognormal(5000, 1);
        let m = fit_cdf_map(&x, &x, DEFAULT_KNOTS).unwrap();
        assert_eq!(m.source_knots(), m.reference_knots());
        for &v in &x[..200] {
            assert!((m.apply(v) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn doubled_sample_is_halved() {
        let reference = lognormal(5000, 2);
        let retrieved: Vec<f64> = reference.iter().map(|v| 2.0 * v).collect();
        let m = fit_cdf_map(&retrieved, &reference, DEFAULT_KNOTS).unwrap();
        for &s in &m.source_knots()[1..DEFAULT_KNOTS + 1] {
            let y = m.apply(s);
            assert!((y / (0.5 * s) - 1.0).abs() < 0.05, "{s} -> {y}");
        }
    }

    #[test]
    fn bias_shrinks_on_own_sample() {
        let reference = lognormal(20000, 3);
        let retrieved: Vec<f64> = lognormal(20000, 4).iter().map(|v| 1.4 * v + 0.2).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let before = (mean(&retrieved) - mean(&reference)).abs();
        let m = fit_cdf_map(&retrieved, &reference, DEFAULT_KNOTS).unwrap();
        let mapped: Vec<f64> = retrieved.iter().map(|&v| m.apply(v)).collect();
        let after = (mean(&mapped) - mean(&reference)).abs();
        assert!(after <= 0.1 * before, "{before} -> {after}");
    }

    #[test]
    fn zero_mass_keeps_reference_mean() {
        let reference = lognormal(20000, 9);
        let mut retrieved = lognormal(20000, 10);
        for v in retrieved.iter_mut().step_by(20) {
            *v = 0.0;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let before = (mean(&retrieved) - mean(&reference)).abs();
        let m = fit_cdf_map(&retrieved, &reference, DEFAULT_KNOTS).unwrap();
        let mapped: Vec<f64> = retrieved.iter().map(|&v| m.apply(v)).collect();
        let after = (mean(&mapped) - mean(&reference)).abs();
        assert!(after <= 0.1 * before, "{before} -> {after}");
        assert!(m.apply(0.0) > 0.0);
    }

    #[test]
    fn tails_keep_reference_means() {
        let reference = lognormal(3000, 7);
        let retrieved: Vec<f64> = lognormal(3000, 8).iter().map(|v| v.powf(0.7)).collect();
        let m = fit_cdf_map(&retrieved, &reference, DEFAULT_KNOTS).unwrap();
        let (s, r) = (m.source_knots(), m.reference_knots());
        assert_eq!(s.len(), DEFAULT_KNOTS + 2);
        let tail_mean = |v: &[f64], edge: f64| {
            let t: Vec<f64> = v.iter().copied().filter(|&x| x > edge).collect();
            t.iter().sum::<f64>() / t.len() as f64
        };
        let (sn, rn) = (s[DEFAULT_KNOTS], r[DEFAULT_KNOTS]);
        let mapped: Vec<f64> = retrieved.iter().filter(|&&x| x > sn).map(|&x| m.apply(x)).collect();
        let got = mapped.iter().sum::<f64>() / mapped.len() as f64;
        assert!((got - tail_mean(&reference, rn)).abs() < 1e-9, "{got}");
    }

    #[test]
    fn tied_knots_stay_monotone() {
        let m = CdfMap::new(vec![1.0, 2.0, 2.0, 3.0], vec![0.5, 1.0, 2.0, 4.0]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=400 {
            let y = m.apply(i as f64 * 0.01);
            assert!(y >= prev && y >= 0.0);
            prev = y;
        }
        assert_eq!(m.apply(0.0), 0.0);
        assert_eq!(m.apply(2.0), 1.5);
        assert_eq!(m.apply(4.0), 6.0);
    }

    #[test]
    fn csv_round_trip() {
        let m = fit_cdf_map(&lognormal(100, 5), &lognormal(100, 6), 9).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(CdfMap::read_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn fit_errors() {
        assert!(fit_cdf_map(&[0.0, 0.0], &[1.0], 9).is_err());
        assert!(CdfMap::new(vec![2.0, 1.0], vec![1.0, 2.0]).is_err());
    }
}
