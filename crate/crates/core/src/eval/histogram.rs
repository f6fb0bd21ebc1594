use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Fraction of in-range samples per bin.
    pub masses: Vec<f64>,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

/// Bins are `[e_i, e_{i+1})`, the last one closed.
pub fn histogram(rates: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 {
        return Err(Error::Config("need at least two bin edges".into()));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("bin edges must be strictly increasing".into()));
    }
    let n_bins = edges.len() - 1;
    let mut counts = vec![0u64; n_bins];
    let (mut below, mut above) = (0, 0);
    for &r in rates {
        if r < edges[0] {
            below += 1;
        } else if r > edges[n_bins] {
            above += 1;
        } else {
            let b = edges.partition_point(|&e| e <= r).saturating_sub(1).min(n_bins - 1);
            counts[b] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let masses = counts
        .iter()
        .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
        .collect();
    Ok(Histogram {
        edges: edges.to_vec(),
        masses,
        counts,
        below,
        above,
    })
}

/// `n + 1` log-spaced edges from `lo` to `hi`.
pub fn log_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, LogNormal};

    #[test]
    fn single_bin() {
        let h = histogram(&[1.2, 1.5, 1.9], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(h.masses, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn symmetric_samples() {
        let h = histogram(&[-0.5, 0.5, -0.25, 0.25], &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(h.masses, vec![0.5, 0.5]);
        let h = histogram(&[-2.0, 1.0, 3.0], &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!((h.below, h.above, h.counts.clone()), (1, 1, vec![0, 1]));
    }

    #[test]
    fn unsorted_edges() {
        assert!(histogram(&[1.0], &[0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn lognormal_mode_bin() {
        // On log-spaced bins the mass per bin follows the density of ln r,
        // which is normal with mode at r = exp(mu) = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = LogNormal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        let edges = log_edges(1e-2, 1e2, 9);
        let h = histogram(&x, &edges).unwrap();
        let mode = (0..9).max_by(|&a, &b| h.masses[a].total_cmp(&h.masses[b])).unwrap();
        let expected = edges.partition_point(|&e| e <= 1.0) - 1;
        assert_eq!(mode, expected);
        assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
