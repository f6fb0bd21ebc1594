//! Two-stage passive microwave precipitation retrieval.
//!
//! A detection network classifies each pixel as clear, snowing, or raining
//! from brightness temperatures plus ancillary state; a phase-specific
//! estimation network then predicts the near-surface rate from brightness
//! temperatures and the rates of the pixel's nearest database neighbors.
//! A k-nearest-neighbor Bayesian retrieval serves as the baseline, and the
//! [`pipeline`] module adds two-radar fusion, quantile-mapping bias removal,
//! and latitude-band rescaling.

pub mod data;
pub mod error;
pub mod eval;
pub mod knn;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
