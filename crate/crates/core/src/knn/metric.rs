use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Euclidean,
    Mahalanobis,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(MetricKind::Euclidean),
            "mahalanobis" => Ok(MetricKind::Mahalanobis),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Relative ridge added to the sample covariance before inversion.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Distance over brightness-temperature space.
///
/// Mahalanobis distances are evaluated as `|W (a - b)|` where `W` is the
/// transposed Cholesky factor of the inverse covariance, so that
/// `|W d|^2 = d^T S^-1 d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMetric {
    kind: MetricKind,
    dim: usize,
    /// Row-major inverse covariance, Mahalanobis only.
    cov_inverse: Option<Vec<f64>>,
    /// Row-major whitening matrix, Mahalanobis only.
    whitener: Option<Vec<f64>>,
}

impl DistanceMetric {
    pub fn euclidean(dim: usize) -> Self {
        Self {
            kind: MetricKind::Euclidean,
            dim,
            cov_inverse: None,
            whitener: None,
        }
    }

    /// Mahalanobis metric from an explicit inverse covariance (row-major `dim x dim`).
    pub fn mahalanobis(cov_inverse: &[f64], dim: usize) -> Result<Self> {
        if cov_inverse.len() != dim * dim || dim == 0 {
            return Err(Error::IndexBuild(format!(
                "inverse covariance has {} entries, expected {dim}x{dim}",
                cov_inverse.len()
            )));
        }
        let s = DMatrix::from_row_slice(dim, dim, cov_inverse);
        let asym = (&s - s.transpose()).abs().max();
        if asym > 1e-9 {
            return Err(Error::IndexBuild(format!(
                "inverse covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let chol = s.clone().cholesky().ok_or_else(|| {
            Error::IndexBuild("inverse covariance is not positive definite".into())
        })?;
        let w = chol.l().transpose();
        Ok(Self {
            kind: MetricKind::Mahalanobis,
            dim,
            cov_inverse: Some(row_major(&s)),
            whitener: Some(row_major(&w)),
        })
    }

    /// Mahalanobis metric from the sample covariance of `samples`, with a
    /// ridge of `COVARIANCE_RIDGE * trace / dim` on the diagonal.
    pub fn mahalanobis_from_samples<'a, I>(samples: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<&[f64]> = samples.into_iter().collect();
        if rows.len() <= dim {
            return Err(Error::IndexBuild(format!(
                "{} samples cannot estimate a {dim}-channel covariance",
                rows.len()
            )));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            if r.len() != dim {
                return Err(Error::IndexBuild(format!(
                    "sample has {} channels, expected {dim}",
                    r.len()
                )));
            }
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for r in &rows {
            for i in 0..dim {
                let di = r[i] - mean[i];
                for j in i..dim {
                    cov[(i, j)] += di * (r[j] - mean[j]);
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov[(i, j)] / (n - 1.0);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let ridge = COVARIANCE_RIDGE * cov.trace() / dim as f64;
        for i in 0..dim {
            cov[(i, i)] += ridge;
        }
        let inv = cov
            .cholesky()
            .ok_or_else(|| Error::IndexBuild("singular covariance after ridge".into()))?
            .inverse();
        let inv = (&inv + inv.transpose()) * 0.5;
        Self::mahalanobis(&row_major(&inv), dim)
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cov_inverse(&self) -> Option<&[f64]> {
        self.cov_inverse.as_deref()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.dim);
        debug_assert_eq!(b.len(), self.dim);
        match &self.whitener {
            None => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Some(w) => {
                let n = self.dim;
                let mut stack = [0.0f64; STACK_DIM];
                let mut heap = Vec::new();
                let diff: &mut [f64] = if n <= STACK_DIM {
                    &mut stack[..n]
                } else {
                    heap.resize(n, 0.0);
                    &mut heap
                };
                for (d, (x, y)) in diff.iter_mut().zip(a.iter().zip(b)) {
                    *d = x - y;
                }
                // The whitener is upper triangular.
                let mut total = 0.0;
                for i in 0..n {
                    let row = &w[i * n..(i + 1) * n];
                    let s: f64 = row[i..].iter().zip(&diff[i..]).map(|(wij, dj)| wij * dj).sum();
                    total += s * s;
                }
                total.sqrt()
            }
        }
    }
}

const STACK_DIM: usize = 32;

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        m
    }

    #[test]
    fn identity_mahalanobis_is_euclidean() {
        let m = DistanceMetric::mahalanobis(&identity(3), 3).unwrap();
        let e = DistanceMetric::euclidean(3);
        let pairs = [
            ([0.0, 0.0, 0.0], [3.0, 4.0, 0.0]),
            ([1.5, -2.0, 7.0], [-3.25, 0.5, 2.0]),
        ];
        for (a, b) in pairs {
            assert!((m.distance(&a, &b) - e.distance(&a, &b)).abs() < 1e-9);
        }
        assert_eq!(e.distance(&[0.0, 0.0, 0.0], &[3.0, 4.0, 0.0]), 5.0);
    }

    #[test]
    fn diagonal_inverse_covariance_scales_axes() {
        let m = DistanceMetric::mahalanobis(&[4.0, 0.0, 0.0, 1.0], 2).unwrap();
        // d^T S d = 4 * 1^2 + 1 * 2^2 = 8
        assert!((m.distance(&[1.0, 2.0], &[0.0, 0.0]) - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(DistanceMetric::mahalanobis(&[1.0, 0.5, 0.0, 1.0], 2).is_err());
        assert!(DistanceMetric::mahalanobis(&[1.0, 0.0, 0.0, -1.0], 2).is_err());
    }

    #[test]
    fn sample_covariance_needs_more_samples_than_channels() {
        let rows = [[1.0, 2.0], [2.0, 1.0]];
        let err = DistanceMetric::mahalanobis_from_samples(rows.iter().map(|r| &r[..]), 2);
        assert!(matches!(err, Err(Error::IndexBuild(_))));
    }

    #[test]
    fn constant_channel_is_rescued_by_ridge() {
        let rows: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 5.0]).collect();
        let m = DistanceMetric::mahalanobis_from_samples(rows.iter().map(|r| &r[..]), 2).unwrap();
        assert!(m.distance(&[0.0, 5.0], &[1.0, 5.0]).is_finite());
    }
}
