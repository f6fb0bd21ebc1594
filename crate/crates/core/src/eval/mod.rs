//! Skill scores, histograms, and gridded accumulation.

pub mod grid;
pub mod histogram;
pub mod metrics;

pub use grid::{
    accumulate_grid, accumulate_grid_default, zonal_mean, Grid, GridCell, GridPhase, GridSample,
    NeumaierSum, PhaseLedger,
};
pub use histogram::{histogram, log_edges, Histogram};
pub use metrics::{confusion, estimation_metrics, quantile_sorted, ConfusionCounts, EstimationMetrics};
