use super::Matrix;
use crate::error::{Error, Result};

/// Row-wise softmax with the row maximum subtracted before exponentiation,
/// so logits of magnitude 1e3 and beyond do not overflow.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Gradient of the summed cross-entropy `Σᵢ CE(yᵢ, softmax(logitsᵢ))` with
/// respect to the logits: `softmax(logits) − Y`.
///
/// The loss is summed over rows, not averaged, so the Hebbian update built on
/// this gradient carries no hidden `1/S` factor.
pub fn ce_grad_wrt_logits(labels_onehot: &Matrix, logits: &Matrix) -> Result<Matrix> {
    if labels_onehot.shape() != logits.shape() {
        return Err(Error::shape(
            "ce_grad_wrt_logits",
            format!("{}x{}", logits.rows(), logits.cols()),
            format!("{}x{}", labels_onehot.rows(), labels_onehot.cols()),
        ));
    }
    softmax_rows(logits).sub(labels_onehot)
}

/// Summed cross-entropy `Σᵢ −Σ_c y_ic log softmax(logitsᵢ)_c`, evaluated with
/// log-sum-exp.
pub fn summed_cross_entropy(labels_onehot: &Matrix, logits: &Matrix) -> Result<f64> {
    if labels_onehot.shape() != logits.shape() {
        return Err(Error::shape(
            "summed_cross_entropy",
            format!("{}x{}", logits.rows(), logits.cols()),
            format!("{}x{}", labels_onehot.rows(), labels_onehot.cols()),
        ));
    }
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (&y, &z) in labels_onehot.row(r).iter().zip(row) {
            if y != 0.0 {
                loss -= y * (z - lse);
            }
        }
    }
    Ok(loss)
}
