//! Fréchet distance between Gaussian fits of two feature populations.
//!
//! For `N(μa, Σa)` and `N(μb, Σb)` the squared 2-Wasserstein distance is
//!
//! ```text
//! ‖μa − μb‖² + tr(Σa) + tr(Σb) − 2 tr((Σa^½ Σb Σa^½)^½)
//! ```
//!
//! The inner root is taken of the symmetric matrix `Σa^½ Σb Σa^½`, which has
//! the same trace root as the non-symmetric product `Σa Σb` but keeps the
//! computation inside the symmetric eigensolver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::linalg::{sym_sqrt, Matrix};

/// Mean and unbiased covariance of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Column means and the `n − 1` sample covariance of `features` (one sample per row).
pub fn fit_gaussian(features: &Matrix) -> Result<GaussianStats> {
    let n = features.rows();
    if n < 2 {
        return Err(Error::InvalidData(format!(
            "a covariance estimate needs at least 2 samples, got {n}"
        )));
    }
    if !features.is_finite() {
        return Err(Error::NonFinite("features passed to fit_gaussian".into()));
    }
    let d = features.cols();
    let mean = features.col_means();
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in features.row_iter() {
        for ((c, &x), &m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(GaussianStats {
        mean,
        cov: cov.symmetrized(),
        n,
    })
}

/// Squared Fréchet distance between two Gaussian fits.
///
/// A slightly negative total (rounding in the trace-root term) is clamped to
/// zero; anything below `-1e-8 × max(1, tr Σa + tr Σb)` is reported as a
/// numerical failure.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() || a.cov.rows() != a.dim() || b.cov.rows() != b.dim() {
        return Err(Error::shape(
            "frechet_distance",
            format!("dimension {}", a.dim()),
            format!("dimension {}", b.dim()),
        ));
    }
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let root_a = sym_sqrt(&a.cov, None)?;
    let inner = root_a.matmul(&b.cov)?.matmul(&root_a)?.symmetrized();
    let cross = sym_sqrt(&inner, None)?.trace();
    let traces = a.cov.trace() + b.cov.trace();
    let total = mean_term + traces - 2.0 * cross;
    if total < 0.0 {
        let tol = 1e-8 * traces.max(1.0);
        if total < -tol {
            return Err(Error::NotPsd {
                eigenvalue: total,
                tolerance: tol,
            });
        }
        return Ok(0.0);
    }
    Ok(total)
}

/// A Fréchet distance together with what it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidReport {
    pub layer: String,
    pub dim: usize,
    pub samples_a: usize,
    pub samples_b: usize,
    pub fid: f64,
}

/// Fréchet distance between the `layer_id` activations of two feature sets.
pub fn fid_between_sets(fs_a: &FeatureSet, fs_b: &FeatureSet, layer_id: &str) -> Result<FidReport> {
    let za = fs_a.layer(layer_id)?;
    let zb = fs_b.layer(layer_id)?;
    if za.cols() != zb.cols() {
        return Err(Error::InvalidData(format!(
            "layer {layer_id:?} has dim {} in {:?} but dim {} in {:?}",
            za.cols(),
            fs_a.split_name(),
            zb.cols(),
            fs_b.split_name()
        )));
    }
    let fid = frechet_distance(&fit_gaussian(za)?, &fit_gaussian(zb)?)?;
    Ok(FidReport {
        layer: layer_id.to_string(),
        dim: za.cols(),
        samples_a: za.rows(),
        samples_b: zb.rows(),
        fid,
    })
}
