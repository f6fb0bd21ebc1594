//! Exact k-nearest-neighbor search over database brightness temperatures.
//!
//! The index is a vantage-point tree. Each split node keeps the distance range
//! of both children from its vantage point, and a subtree is skipped only when
//! the triangle-inequality lower bound exceeds the current k-th distance by more
//! than floating-point slack, so results match an exhaustive scan exactly.
//! Ties are ordered by ascending record index.

use std::cmp::Ordering;
use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metric::{DistanceMetric, MetricKind};
use crate::data::{PrecipDatabase, PrecipLabel};
use crate::error::{Error, Result};

/// Default neighbor count.
pub const DEFAULT_K: usize = 20;

const LEAF_SIZE: usize = 16;
const BUILD_SEED: u64 = 0x5eed_1dec;
/// Relative slack on pruning bounds; distances carry O(dim * eps) rounding.
const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
    pub label: PrecipLabel,
    pub rate: f64,
}

/// Neighbors ordered by ascending (distance, record index).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub neighbors: Vec<Neighbor>,
    pub k: usize,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Neighbor> {
        self.neighbors.iter()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.neighbors.iter().map(|n| n.index).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Child {
    node: usize,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<usize>),
    Split {
        vantage: usize,
        inner: Option<Child>,
        outer: Option<Child>,
    },
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    db: Arc<PrecipDatabase>,
    metric: DistanceMetric,
    nodes: Vec<Node>,
    root: usize,
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl NeighborIndex {
    /// Builds an index over every record of `db`. Mahalanobis metrics use the
    /// database's own brightness-temperature covariance.
    pub fn build(db: Arc<PrecipDatabase>, metric_kind: MetricKind) -> Result<Self> {
        if db.is_empty() {
            return Err(Error::IndexBuild("database is empty".into()));
        }
        let dim = db.n_channels();
        let metric = match metric_kind {
            MetricKind::Euclidean => DistanceMetric::euclidean(dim),
            MetricKind::Mahalanobis => DistanceMetric::mahalanobis_from_samples(
                db.records().iter().map(|r| r.tb.as_slice()),
                dim,
            )?,
        };
        Self::with_metric(db, metric)
    }

    pub fn with_metric(db: Arc<PrecipDatabase>, metric: DistanceMetric) -> Result<Self> {
        if db.is_empty() {
            return Err(Error::IndexBuild("database is empty".into()));
        }
        if metric.dim() != db.n_channels() {
            return Err(Error::IndexBuild(format!(
                "metric is {}-dimensional, database has {} channels",
                metric.dim(),
                db.n_channels()
            )));
        }
        let mut items: Vec<usize> = (0..db.len()).collect();
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(BUILD_SEED));
        let mut index = Self {
            db,
            metric,
            nodes: Vec::new(),
            root: 0,
        };
        index.root = index.build_node(items);
        Ok(index)
    }

    fn tb(&self, i: usize) -> &[f64] {
        &self.db.records()[i].tb
    }

    fn build_node(&mut self, mut items: Vec<usize>) -> usize {
        if items.len() <= LEAF_SIZE {
            self.nodes.push(Node::Leaf(items));
            return self.nodes.len() - 1;
        }
        let vantage = items.swap_remove(0);
        let mut scored: Vec<(f64, usize)> = items
            .iter()
            .map(|&i| (self.metric.distance(self.tb(vantage), self.tb(i)), i))
            .collect();
        let mid = scored.len() / 2;
        scored.select_nth_unstable_by(mid, by_distance_then_index);
        let outer_part = scored.split_off(mid);
        let inner_part = scored;

        let make_child = |this: &mut Self, part: Vec<(f64, usize)>| -> Option<Child> {
            if part.is_empty() {
                return None;
            }
            let lo = part.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = part.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let node = this.build_node(part.into_iter().map(|p| p.1).collect());
            Some(Child { node, lo, hi })
        };
        let inner = make_child(self, inner_part);
        let outer = make_child(self, outer_part);
        self.nodes.push(Node::Split {
            vantage,
            inner,
            outer,
        });
        self.nodes.len() - 1
    }

    pub fn database(&self) -> &Arc<PrecipDatabase> {
        &self.db
    }

    pub fn metric(&self) -> &DistanceMetric {
        &self.metric
    }

    pub fn n_channels(&self) -> usize {
        self.db.n_channels()
    }

    /// Exact `k` nearest records to `tb`.
    pub fn query(&self, tb: &[f64], k: usize) -> Result<NeighborSet> {
        self.query_excluding(tb, k, None)
    }

    /// Like [`query`](Self::query) but never returns record `exclude`; used
    /// when the query is itself a database member.
    pub fn query_excluding(
        &self,
        tb: &[f64],
        k: usize,
        exclude: Option<usize>,
    ) -> Result<NeighborSet> {
        if tb.len() != self.n_channels() {
            return Err(Error::Query(format!(
                "query has {} channels, index has {}",
                tb.len(),
                self.n_channels()
            )));
        }
        if k == 0 {
            return Err(Error::Query("k must be >= 1".into()));
        }
        let mut best = Best {
            k,
            items: Vec::with_capacity(k + 1),
            exclude,
        };
        self.search(self.root, tb, &mut best);
        let records = self.db.records();
        Ok(NeighborSet {
            neighbors: best
                .items
                .into_iter()
                .map(|(distance, index)| Neighbor {
                    index,
                    distance,
                    label: records[index].label,
                    rate: records[index].rate,
                })
                .collect(),
            k,
        })
    }

    fn search(&self, node: usize, q: &[f64], best: &mut Best) {
        match &self.nodes[node] {
            Node::Leaf(items) => {
                for &i in items {
                    best.offer(self.metric.distance(q, self.tb(i)), i);
                }
            }
            Node::Split {
                vantage,
                inner,
                outer,
            } => {
                let d = self.metric.distance(q, self.tb(*vantage));
                best.offer(d, *vantage);
                let bound = |c: &Child| (c.lo - d).max(d - c.hi).max(0.0);
                let mut children: Vec<(f64, Child)> = [inner, outer]
                    .into_iter()
                    .flatten()
                    .map(|c| (bound(c), *c))
                    .collect();
                if children.len() == 2 && children[1].0 < children[0].0 {
                    children.swap(0, 1);
                }
                for (lb, child) in children {
                    if best.can_skip(lb, d + child.hi) {
                        continue;
                    }
                    self.search(child.node, q, best);
                }
            }
        }
    }
}

struct Best {
    k: usize,
    items: Vec<(f64, usize)>,
    exclude: Option<usize>,
}

impl Best {
    fn offer(&mut self, distance: f64, index: usize) {
        if self.exclude == Some(index) {
            return;
        }
        let cand = (distance, index);
        if self.items.len() == self.k {
            let worst = self.items.last().expect("k >= 1");
            if by_distance_then_index(&cand, worst) != Ordering::Less {
                return;
            }
            self.items.pop();
        }
        let pos = self
            .items
            .partition_point(|x| by_distance_then_index(x, &cand) == Ordering::Less);
        self.items.insert(pos, cand);
    }

    /// True when no point at distance >= `lower_bound` can enter the set.
    /// `scale` bounds the magnitudes involved in computing the bound.
    fn can_skip(&self, lower_bound: f64, scale: f64) -> bool {
        if self.items.len() < self.k {
            return false;
        }
        let worst = self.items.last().expect("full").0;
        lower_bound > worst + PRUNE_SLACK * (scale + worst)
    }
}

/// Writes `query_id,rank,record_index,distance,label,rate` rows, rank 1-based.
pub fn write_neighbor_csv<W: Write>(out: W, sets: &[(usize, NeighborSet)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query_id", "rank", "record_index", "distance", "label", "rate"])?;
    for (qid, set) in sets {
        for (rank, n) in set.neighbors.iter().enumerate() {
            w.write_record([
                qid.to_string(),
                (rank + 1).to_string(),
                n.index.to_string(),
                n.distance.to_string(),
                n.label.to_string(),
                n.rate.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AncillaryState, CoincidenceRecord, RadarSource, SurfaceClass};

    fn line_db(values: &[f64]) -> Arc<PrecipDatabase> {
        let records = values
            .iter()
            .map(|&v| CoincidenceRecord {
                tb: vec![100.0 + v],
                ancillary: AncillaryState {
                    t2m: 280.0,
                    ..Default::default()
                },
                surface: SurfaceClass::Ocean,
                label: PrecipLabel::Rain,
                rate: 1.0 + v,
                lat: 0.0,
                lon: 0.0,
                source: RadarSource::Dpr,
            })
            .collect();
        Arc::new(PrecipDatabase::from_records(records).unwrap())
    }

    #[test]
    fn hand_geometry_on_a_line() {
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        let idx = NeighborIndex::build(line_db(&values), MetricKind::Euclidean).unwrap();
        let set = idx.query(&[104.4], 3).unwrap();
        assert_eq!(set.indices(), vec![4, 5, 3]);
        let d: Vec<f64> = set.iter().map(|n| n.distance).collect();
        for (got, want) in d.iter().zip([0.4, 0.6, 1.4]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn k_beyond_size_returns_everything_sorted() {
        let values: Vec<f64> = (0..40).map(|i| ((i * 7) % 40) as f64).collect();
        let idx = NeighborIndex::build(line_db(&values), MetricKind::Euclidean).unwrap();
        let set = idx.query(&[120.2], 100).unwrap();
        assert_eq!(set.len(), 40);
        assert!(set.neighbors.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn exact_match_comes_first() {
        let values: Vec<f64> = (0..50).map(|i| (i as f64) * 0.37).collect();
        let idx = NeighborIndex::build(line_db(&values), MetricKind::Euclidean).unwrap();
        let set = idx.query(&[100.0 + values[17]], 5).unwrap();
        assert_eq!(set.neighbors[0].index, 17);
        assert_eq!(set.neighbors[0].distance, 0.0);
    }

    #[test]
    fn ties_break_by_record_index() {
        let values = [1.0, 3.0, 1.0, 3.0, 2.0, 1.0];
        let idx = NeighborIndex::build(line_db(&values), MetricKind::Euclidean).unwrap();
        let set = idx.query(&[102.0], 6).unwrap();
        assert_eq!(set.indices(), vec![4, 0, 1, 2, 3, 5]);
    }

    #[test]
    fn singleton_database() {
        let idx = NeighborIndex::build(line_db(&[5.0]), MetricKind::Euclidean).unwrap();
        let set = idx.query(&[101.0], 20).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.neighbors[0].index, 0);
        assert!((set.neighbors[0].distance - 4.0).abs() < 1e-12);
    }

    #[test]
    fn exclusion_skips_self() {
        let values: Vec<f64> = (0..30).map(f64::from).collect();
        let idx = NeighborIndex::build(line_db(&values), MetricKind::Euclidean).unwrap();
        let set = idx.query_excluding(&[110.0], 2, Some(10)).unwrap();
        assert_eq!(set.indices(), vec![9, 11]);
    }

    #[test]
    fn query_errors() {
        let idx = NeighborIndex::build(line_db(&[1.0, 2.0]), MetricKind::Euclidean).unwrap();
        assert!(matches!(idx.query(&[1.0, 2.0], 1), Err(Error::Query(_))));
        assert!(matches!(idx.query(&[1.0], 0), Err(Error::Query(_))));
    }

    #[test]
    fn neighbor_csv_layout() {
        let idx = NeighborIndex::build(line_db(&[0.0, 1.0]), MetricKind::Euclidean).unwrap();
        let set = idx.query(&[100.0], 2).unwrap();
        let mut buf = Vec::new();
        write_neighbor_csv(&mut buf, &[(7, set)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "query_id,rank,record_index,distance,label,rate");
        assert_eq!(lines[1], "7,1,0,0,rain,1");
        assert_eq!(lines[2], "7,2,1,1,rain,2");
    }
}
