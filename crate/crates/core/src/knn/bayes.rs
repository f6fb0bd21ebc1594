//! Bayesian retrieval from a neighbor set: nested majority-vote detection and
//! a convex weighted mean of same-phase neighbor rates.

use serde::{Deserialize, Serialize};

use super::index::{NeighborIndex, NeighborSet};
use crate::data::PrecipLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    #[default]
    InverseDistance,
    Uniform,
}

/// Precipitating iff strictly more than half of the neighbors precipitate.
/// The phase is the majority among precipitating neighbors; a phase tie goes
/// to the nearest precipitating neighbor.
pub fn detect_majority(neighbors: &NeighborSet) -> PrecipLabel {
    let k = neighbors.len();
    let (mut rain, mut snow) = (0usize, 0usize);
    for n in neighbors.iter() {
        match n.label {
            PrecipLabel::Rain => rain += 1,
            PrecipLabel::Snow => snow += 1,
            PrecipLabel::None => {}
        }
    }
    if 2 * (rain + snow) <= k {
        return PrecipLabel::None;
    }
    match rain.cmp(&snow) {
        std::cmp::Ordering::Greater => PrecipLabel::Rain,
        std::cmp::Ordering::Less => PrecipLabel::Snow,
        std::cmp::Ordering::Equal => neighbors
            .iter()
            .find(|n| n.label.is_precipitating())
            .map(|n| n.label)
            .expect("a phase tie implies precipitating neighbors"),
    }
}

/// Weights over the neighbors of `phase`, paired with their rates.
///
/// Inverse-distance weights are `w_i ∝ 1 / d_i`; when some same-phase
/// neighbors sit at distance zero the weight is shared uniformly among them.
pub fn phase_weights(
    neighbors: &NeighborSet,
    phase: PrecipLabel,
    scheme: WeightScheme,
) -> Result<Vec<(f64, f64)>> {
    if !phase.is_precipitating() {
        return Err(Error::Estimation("phase must be rain or snow".into()));
    }
    let same: Vec<(f64, f64)> = neighbors
        .iter()
        .filter(|n| n.label == phase)
        .map(|n| (n.distance, n.rate))
        .collect();
    if same.is_empty() {
        return Err(Error::Estimation(format!(
            "no {phase} neighbors among {}",
            neighbors.len()
        )));
    }
    let uniform = |pairs: Vec<(f64, f64)>| {
        let w = 1.0 / pairs.len() as f64;
        pairs.into_iter().map(|(_, r)| (w, r)).collect::<Vec<_>>()
    };
    Ok(match scheme {
        WeightScheme::Uniform => uniform(same),
        WeightScheme::InverseDistance => {
            let exact: Vec<(f64, f64)> = same.iter().copied().filter(|p| p.0 == 0.0).collect();
            if !exact.is_empty() {
                uniform(exact)
            } else {
                let inv: Vec<f64> = same.iter().map(|p| 1.0 / p.0).collect();
                let total: f64 = inv.iter().sum();
                inv.iter()
                    .zip(&same)
                    .map(|(v, p)| (v / total, p.1))
                    .collect()
            }
        }
    })
}

/// Weighted mean rate of the same-phase neighbors.
pub fn estimate_weighted(
    neighbors: &NeighborSet,
    phase: PrecipLabel,
    scheme: WeightScheme,
) -> Result<f64> {
    let weights = phase_weights(neighbors, phase, scheme)?;
    let (lo, hi) = weights
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, r)| {
            (lo.min(r), hi.max(r))
        });
    let rate: f64 = weights.iter().map(|(w, r)| w * r).sum();
    // Rounding may push the mean an ulp outside the hull of the rates.
    Ok(rate.clamp(lo, hi).max(0.0))
}

/// Label and rate from the kNN baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnRetrieval {
    pub label: PrecipLabel,
    pub rate: f64,
}

pub fn knn_retrieve(
    index: &NeighborIndex,
    tb: &[f64],
    k: usize,
    scheme: WeightScheme,
) -> Result<KnnRetrieval> {
    let set = index.query(tb, k)?;
    let label = detect_majority(&set);
    let rate = if label.is_precipitating() {
        estimate_weighted(&set, label, scheme)?
    } else {
        0.0
    };
    Ok(KnnRetrieval { label, rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::index::Neighbor;

    fn set(items: &[(f64, PrecipLabel, f64)]) -> NeighborSet {
        NeighborSet {
            neighbors: items
                .iter()
                .enumerate()
                .map(|(index, &(distance, label, rate))| Neighbor {
                    index,
                    distance,
                    label,
                    rate,
                })
                .collect(),
            k: items.len(),
        }
    }

    fn votes(labels: &[PrecipLabel]) -> NeighborSet {
        let items: Vec<_> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let rate = if l.is_precipitating() { 1.0 } else { 0.0 };
                (i as f64, l, rate)
            })
            .collect();
        set(&items)
    }

    use PrecipLabel::{Rain as R, Snow as S};
    const N: PrecipLabel = PrecipLabel::None;

    #[test]
    fn nine_of_twenty_is_not_precipitating() {
        let mut labels = vec![R; 9];
        labels.extend(vec![N; 11]);
        assert_eq!(detect_majority(&votes(&labels)), N);
    }

    #[test]
    fn exact_half_is_not_precipitating() {
        let mut labels = vec![N; 10];
        labels.extend(vec![R; 10]);
        assert_eq!(detect_majority(&votes(&labels)), N);
    }

    #[test]
    fn eleven_precipitating_rain_majority() {
        let mut labels = vec![N; 9];
        labels.extend([R, S, R, S, R, S, R, S, R, S, R]);
        assert_eq!(detect_majority(&votes(&labels)), R);
    }

    #[test]
    fn phase_tie_goes_to_nearest_precipitating() {
        // Oracle: enumerate the set, count phases, and scan for the first precipitating entry.
        let mut labels = vec![N; 3];
        labels.extend([S, R, R, S, R, S, S, R, R, S, R, S]);
        labels.extend(vec![N; 5]);
        let s = votes(&labels);
        let rain = labels.iter().filter(|&&l| l == R).count();
        let snow = labels.iter().filter(|&&l| l == S).count();
        assert_eq!((rain, snow), (6, 6));
        let nearest = labels.iter().copied().find(|l| l.is_precipitating()).unwrap();
        assert_eq!(nearest, S);
        assert_eq!(detect_majority(&s), S);
    }

    #[test]
    fn inverse_distance_hand_case() {
        let s = set(&[(1.0, R, 2.0), (2.0, S, 9.0), (3.0, R, 4.0)]);
        let w = phase_weights(&s, R, WeightScheme::InverseDistance).unwrap();
        assert!((w[0].0 - 0.75).abs() < 1e-15 && (w[1].0 - 0.25).abs() < 1e-15);
        let rate = estimate_weighted(&s, R, WeightScheme::InverseDistance).unwrap();
        assert!((rate - 2.5).abs() < 1e-12);
    }

    #[test]
    fn equal_distances_give_arithmetic_mean() {
        let s = set(&[(2.0, S, 1.0), (2.0, S, 2.0), (2.0, S, 3.0)]);
        for scheme in [WeightScheme::InverseDistance, WeightScheme::Uniform] {
            assert!((estimate_weighted(&s, S, scheme).unwrap() - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_distance_neighbor_takes_all_weight() {
        let s = set(&[(0.0, R, 1.7), (0.5, R, 9.0), (1.0, R, 0.2)]);
        assert_eq!(
            estimate_weighted(&s, R, WeightScheme::InverseDistance).unwrap(),
            1.7
        );
    }

    #[test]
    fn missing_phase_is_an_error() {
        let s = set(&[(1.0, R, 1.0), (2.0, N, 0.0)]);
        assert!(matches!(
            estimate_weighted(&s, S, WeightScheme::InverseDistance),
            Err(Error::Estimation(_))
        ));
        assert!(estimate_weighted(&s, N, WeightScheme::Uniform).is_err());
    }
}
