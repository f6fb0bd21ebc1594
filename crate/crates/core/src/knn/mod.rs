//! k-nearest-neighbor Bayesian retrieval: exact neighbor search under
//! Euclidean or Mahalanobis distance, majority-vote detection, and
//! weighted rate estimation.

mod bayes;
mod index;
mod metric;

pub use bayes::{
    detect_majority, estimate_weighted, knn_retrieve, phase_weights, KnnRetrieval, WeightScheme,
};
pub use index::{write_neighbor_csv, Neighbor, NeighborIndex, NeighborSet, DEFAULT_K};
pub use metric::{DistanceMetric, MetricKind, COVARIANCE_RIDGE};
