use std::sync::Arc;

use precip_core::data::{
    split_indices, AncillaryState, CoincidenceRecord, PrecipDatabase, PrecipLabel, RadarSource, SurfaceClass,
};
use precip_core::eval::{accumulate_grid, estimation_metrics, histogram, GridPhase, GridSample};
use precip_core::knn::{
    estimate_weighted, phase_weights, DistanceMetric, MetricKind, Neighbor, NeighborIndex, NeighborSet,
    WeightScheme,
};
use precip_core::nn::{cross_entropy, lp_loss, softmax};
use precip_core::pipeline::{fit_cdf_map, fuse, CdfMap, FusedLabel, PixelRetrieval};
use proptest::prelude::*;

fn label_of(code: u8) -> PrecipLabel {
    match code % 3 {
        0 => PrecipLabel::None,
        1 => PrecipLabel::Rain,
        _ => PrecipLabel::Snow,
    }
}

fn record(tb: Vec<f64>, code: u8, rate: f64) -> CoincidenceRecord {
    let label = label_of(code);
    CoincidenceRecord {
        tb,
        ancillary: AncillaryState {
            lwp: 0.1,
            iwp: 0.1,
            wvp: 20.0,
            cape: 100.0,
            t2m: 280.0,
        },
        surface: SurfaceClass::Ocean,
        label,
        rate: if label.is_precipitating() { rate.max(0.01) } else { 0.0 },
        lat: 0.0,
        lon: 0.0,
        source: RadarSource::Dpr,
    }
}

fn pixel(label: PrecipLabel, rate: f64, estimated: bool, source: RadarSource) -> PixelRetrieval {
    let precip = label.is_precipitating();
    PixelRetrieval {
        probs: [1.0 / 3.0; 3],
        label,
        rate: if precip { rate } else { 0.0 },
        estimated: precip && estimated,
        source,
    }
}

/// Exhaustive scan ordered by (distance, index).
fn brute_force(db: &PrecipDatabase, metric: &DistanceMetric, q: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = db
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (i, metric.distance(q, &r.tb)))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn softmax_lies_on_simplex_and_ignores_shifts(
        v in prop::collection::vec(-50.0f64..50.0, 1..8),
        shift in -500.0f64..500.0,
    ) {
        let p = softmax(&v);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn losses_are_non_negative_and_zero_on_targets(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..20),
        logits in prop::collection::vec(-5.0f64..5.0, 3),
        class in 0usize..3,
    ) {
        let (pred, target): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        for p in [1u8, 2] {
            prop_assert!(lp_loss(&pred, &target, p).unwrap() >= 0.0);
            prop_assert_eq!(lp_loss(&target, &target, p).unwrap(), 0.0);
        }
        let mut onehot = vec![0.0; 3];
        onehot[class] = 1.0;
        prop_assert!(cross_entropy(&softmax(&logits), &onehot).unwrap() >= 0.0);
    }

    #[test]
    fn unbiased_errors_ignore_translation(
        pairs in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0), 1..100),
        c in -20.0f64..20.0,
    ) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = estimation_metrics(&pred, &truth, None).unwrap();
        let shifted: Vec<f64> = pred.iter().map(|p| p + c).collect();
        let s = estimation_metrics(&shifted, &truth, None).unwrap();
        prop_assert!((s.bias - m.bias - c).abs() < 1e-9);
        prop_assert!((s.ubrmse - m.ubrmse).abs() < 1e-9);
        prop_assert!((s.ubmae - m.ubmae).abs() < 1e-9);
        prop_assert!(m.ubrmse + 1e-12 >= m.ubmae);
        prop_assert!(m.ubmae >= 0.0);
    }

    #[test]
    fn grid_conserves_rate_totals(
        samples in prop::collection::vec((-90.0f64..=90.0, -180.0f64..=180.0, 0u8..4, 0.0f64..30.0), 0..200),
        res_index in 0usize..4,
    ) {
        let res = [0.1, 0.25, 1.0, 5.0][res_index];
        let labels = [FusedLabel::None, FusedLabel::Rain, FusedLabel::Snow, FusedLabel::Mixed];
        let samples: Vec<GridSample> = samples
            .into_iter()
            .map(|(lat, lon, l, rate)| {
                let label = labels[l as usize];
                GridSample { lat, lon, label, rate: if label.is_precipitating() { rate } else { 0.0 } }
            })
            .collect();
        let grid = accumulate_grid(&samples, res, 0.01).unwrap();
        for phase in [GridPhase::Rain, GridPhase::Snow, GridPhase::All] {
            let expected: f64 = samples.iter().filter(|s| phase.includes(s.label)).map(|s| s.rate).sum();
            let total = grid.total(phase);
            prop_assert!((total - expected).abs() <= 1e-10 * expected.max(1.0));
        }
        let n: u64 = grid.cells().values().map(|c| c.n_samples).sum();
        prop_assert_eq!(n as usize, samples.len());
    }

    #[test]
    fn histogram_mass_sums_to_one(
        rates in prop::collection::vec(0.0f64..100.0, 1..300),
        n_bins in 1usize..30,
    ) {
        let edges: Vec<f64> = (0..=n_bins).map(|i| 100.0 * i as f64 / n_bins as f64).collect();
        let h = histogram(&rates, &edges).unwrap();
        prop_assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(h.counts.iter().sum::<u64>() + h.below + h.above, rates.len() as u64);
    }

    #[test]
    fn fusion_is_symmetric_in_rate_and_label(
        a in (0u8..3, 0.01f64..50.0, any::<bool>()),
        b in (0u8..3, 0.01f64..50.0, any::<bool>()),
    ) {
        let pa = pixel(label_of(a.0), a.1, a.2, RadarSource::Dpr);
        let pb = pixel(label_of(b.0), b.1, b.2, RadarSource::Cpr);
        let ab = fuse(&pa, &pb);
        let ba = fuse(&PixelRetrieval { source: RadarSource::Dpr, ..pb }, &PixelRetrieval { source: RadarSource::Cpr, ..pa });
        prop_assert_eq!(ab.label, ba.label);
        prop_assert!((ab.rate - ba.rate).abs() < 1e-12);
        prop_assert_eq!(ab.estimated, ba.estimated);
        prop_assert_eq!(ab.label.is_precipitating(), pa.label.is_precipitating() || pb.label.is_precipitating());
        let self_fused = fuse(&pa, &PixelRetrieval { source: RadarSource::Cpr, ..pa });
        prop_assert_eq!(self_fused.label, FusedLabel::from(pa.label));
        prop_assert_eq!(self_fused.rate, if pa.estimated { pa.rate } else { 0.0 });
    }

    #[test]
    fn cdf_map_is_monotone(
        retrieved in prop::collection::vec(0.01f64..40.0, 5..200),
        reference in prop::collection::vec(0.01f64..40.0, 5..200),
        xs in prop::collection::vec(-5.0f64..80.0, 2..40),
    ) {
        let map = fit_cdf_map(&retrieved, &reference, 99).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let ys: Vec<f64> = xs.iter().map(|&x| map.apply(x)).collect();
        prop_assert!(ys.iter().all(|&y| y >= 0.0 && y.is_finite()));
        prop_assert!(ys.windows(2).all(|w| w[1] >= w[0]));
        let knots = map.source_knots().len();
        prop_assert!((99..=101).contains(&knots));
        let identity = CdfMap::new(map.source_knots().to_vec(), map.source_knots().to_vec()).unwrap();
        for &x in &xs {
            if x >= 0.0 {
                prop_assert!((identity.apply(x) - x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn split_is_a_partition(n in 0usize..2000, seed in any::<u64>()) {
        let s = split_indices(n, (0.7, 0.15, 0.15), seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(s.val.len(), (n as f64 * 0.15 + 1e-9).floor() as usize);
        prop_assert_eq!(s.test.len(), (n as f64 * 0.15 + 1e-9).floor() as usize);
        prop_assert_eq!(split_indices(n, (0.7, 0.15, 0.15), seed).unwrap(), s);
    }

    #[test]
    fn bayesian_weights_form_a_convex_combination(
        neighbors in prop::collection::vec((0.0f64..10.0, 0u8..3, 0.01f64..50.0), 1..30),
        uniform in any::<bool>(),
    ) {
        let mut list: Vec<Neighbor> = neighbors
            .into_iter()
            .enumerate()
            .map(|(index, (d, code, rate))| Neighbor { index, distance: d, label: label_of(code), rate })
            .collect();
        list.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
        let k = list.len();
        let set = NeighborSet { neighbors: list, k };
        let scheme = if uniform { WeightScheme::Uniform } else { WeightScheme::InverseDistance };
        for phase in [PrecipLabel::Rain, PrecipLabel::Snow] {
            let rates: Vec<f64> = set.iter().filter(|n| n.label == phase).map(|n| n.rate).collect();
            match phase_weights(&set, phase, scheme) {
                Ok(w) => {
                    prop_assert!(w.iter().all(|&(w, _)| w >= 0.0));
                    prop_assert!((w.iter().map(|p| p.0).sum::<f64>() - 1.0).abs() < 1e-12);
                    let est = estimate_weighted(&set, phase, scheme).unwrap();
                    let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(est >= lo && est <= hi);
                }
                Err(_) => prop_assert!(rates.is_empty()),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn vp_tree_matches_exhaustive_scan(
        rows in prop::collection::vec((prop::collection::vec(150.0f64..300.0, 4), 0u8..3, 0.01f64..20.0), 8..300),
        queries in prop::collection::vec(prop::collection::vec(140.0f64..310.0, 4), 1..10),
        k in 1usize..25,
        mahalanobis in any::<bool>(),
        duplicate in any::<bool>(),
    ) {
        let mut records: Vec<CoincidenceRecord> =
            rows.into_iter().map(|(tb, code, rate)| record(tb, code, rate)).collect();
        if duplicate {
            // Exact ties exercise the index-order tie break.
            let copy = records[0].clone();
            records.push(copy.clone());
            records.push(copy);
        }
        let db = Arc::new(PrecipDatabase::from_records(records).unwrap());
        let kind = if mahalanobis { MetricKind::Mahalanobis } else { MetricKind::Euclidean };
        let index = NeighborIndex::build(db.clone(), kind).unwrap();
        let mut queries = queries;
        queries.push(db.records()[0].tb.clone());
        for q in &queries {
            let got = index.query(q, k).unwrap();
            let want = brute_force(&db, index.metric(), q, k);
            prop_assert_eq!(got.indices(), want.iter().map(|w| w.0).collect::<Vec<_>>());
            for (n, w) in got.iter().zip(&want) {
                prop_assert_eq!(n.distance, w.1);
            }
        }
    }
}
