//! Hebbian heads and their layer ensemble.
//!
//! A head is a `K × D` weight matrix trained on one layer's support
//! features. Starting from `W = 0`, each of `M` steps computes the
//! postsynaptic responses `V = softmax(Z Wᵀ) − Y` (the gradient of the summed
//! cross-entropy with respect to the logits) and applies
//!
//! ```text
//! W ← W − α Vᵀ Z
//! ```
//!
//! which is one plain gradient-descent step on `Σᵢ CE(yᵢ, softmax(W zᵢ))`.
//! Heads on different layers are trained independently; the ensemble
//! classifies a query by the sum of the heads' logits.

use serde::{Deserialize, Serialize};

use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::features::Layers;
use crate::linalg::{ce_grad_wrt_logits, Matrix};

/// Weight magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HebbianConfig {
    /// Hebbian learning rate α.
    pub alpha: f64,
    /// Number of update steps M.
    pub steps: usize,
}

impl Default for HebbianConfig {
    fn default() -> Self {
        HebbianConfig {
            alpha: 0.01,
            steps: 400,
        }
    }
}

impl HebbianConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.steps < 1 {
            return Err(Error::Config(
                "the Hebb rule needs at least one step".into(),
            ));
        }
        Ok(())
    }
}

/// Postsynaptic responses `V = softmax(Z Wᵀ) − Y`, one row per sample.
pub fn responses(z: &Matrix, y_onehot: &Matrix, w: &Matrix) -> Result<Matrix> {
    if z.rows() != y_onehot.rows() {
        return Err(Error::shape(
            "hebb_rule",
            format!("{} label rows", z.rows()),
            y_onehot.rows(),
        ));
    }
    ce_grad_wrt_logits(y_onehot, &z.matmul_t(w)?)
}

/// One update `W ← W − α Vᵀ Z`.
pub fn hebb_step(w: &mut Matrix, z: &Matrix, y_onehot: &Matrix, alpha: f64) -> Result<()> {
    let v = responses(z, y_onehot, w)?;
    w.axpy(-alpha, &v.t_matmul(z)?)
}

/// Runs the Hebb rule from zero weights and returns the `K × D` weight matrix.
pub fn hebb_rule(z: &Matrix, y_onehot: &Matrix, cfg: &HebbianConfig) -> Result<Matrix> {
    cfg.validate()?;
    let mut w = Matrix::zeros(y_onehot.cols(), z.cols());
    for step in 1..=cfg.steps {
        hebb_step(&mut w, z, y_onehot, cfg.alpha)?;
        let max_abs = w.max_abs();
        if !w.is_finite() || max_abs > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { step, max_abs });
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HebbianHead {
    pub layer_id: String,
    pub weights: Matrix,
}

impl HebbianHead {
    pub fn ways(&self) -> usize {
        self.weights.rows()
    }

    /// `Z Wᵀ` for query features of this head's layer.
    pub fn logits(&self, queries: &Matrix) -> Result<Matrix> {
        queries.matmul_t(&self.weights)
    }
}

/// How per-layer scores are combined before the argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fusion {
    /// Plain sum of raw per-layer scores.
    #[default]
    Sum,
    /// Standardize each layer's score row (mean 0, unit variance across
    /// classes) before summing. Rows with zero spread are only centered.
    RowZScore,
}

fn zscore_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let k = m.cols() as f64;
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / k;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
        let sd = var.sqrt();
        for v in row.iter_mut() {
            *v -= mean;
            if sd > 0.0 {
                *v /= sd;
            }
        }
    }
    out
}

/// Sums per-layer score matrices in the order given.
pub fn fuse_scores(per_layer: &[Matrix], fusion: Fusion) -> Result<Matrix> {
    let first = per_layer
        .first()
        .ok_or_else(|| Error::Config("nothing to fuse".into()))?;
    let mut total = Matrix::zeros(first.rows(), first.cols());
    for scores in per_layer {
        match fusion {
            Fusion::Sum => total.axpy(1.0, scores)?,
            Fusion::RowZScore => total.axpy(1.0, &zscore_rows(scores))?,
        }
    }
    Ok(total)
}

/// Row-wise argmax, ties to the lowest class index.
pub fn argmax_labels(scores: &Matrix) -> Vec<usize> {
    (0..scores.rows()).map(|r| scores.argmax_row(r)).collect()
}

/// Fraction of positions where `predictions` and `truth` agree.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::shape("accuracy", truth.len(), predictions.len()));
    }
    if truth.is_empty() {
        return Err(Error::Config("accuracy of an empty prediction set".into()));
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Fused logits and the predicted label per query row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Matrix,
    pub labels: Vec<usize>,
}

/// Hebbian heads over a layer set, fused by summed logits.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    heads: Vec<HebbianHead>,
    fusion: Fusion,
}

impl EnsembleModel {
    pub fn new(heads: Vec<HebbianHead>) -> Result<Self> {
        let ways = heads
            .first()
            .ok_or_else(|| Error::Config("an ensemble needs at least one head".into()))?
            .ways();
        for (i, h) in heads.iter().enumerate() {
            if h.ways() != ways {
                return Err(Error::Config(format!(
                    "head {:?} has {} classes, expected {ways}",
                    h.layer_id,
                    h.ways()
                )));
            }
            if heads[..i].iter().any(|o| o.layer_id == h.layer_id) {
                return Err(Error::Config(format!(
                    "duplicate layer id {:?}",
                    h.layer_id
                )));
            }
        }
        Ok(EnsembleModel {
            heads,
            fusion: Fusion::Sum,
        })
    }

    pub fn with_fusion(mut self, fusion: Fusion) -> Self {
        self.fusion = fusion;
        self
    }

    pub fn heads(&self) -> &[HebbianHead] {
        &self.heads
    }

    pub fn fusion(&self) -> Fusion {
        self.fusion
    }

    /// Each head's logits on its own layer of `queries`, in head order.
    pub fn head_logits(&self, queries: &Layers) -> Result<Vec<Matrix>> {
        self.heads
            .iter()
            .map(|h| h.logits(queries.get(&h.layer_id)?))
            .collect()
    }
}

/// Trains one head per requested layer on the episode's support set.
pub fn fit_ensemble<S: AsRef<str>>(
    ep: &Episode,
    layer_ids: &[S],
    cfg: &HebbianConfig,
) -> Result<EnsembleModel> {
    let y = Matrix::one_hot(&ep.support.labels, ep.ways())?;
    let mut heads = Vec::with_capacity(layer_ids.len());
    for id in layer_ids {
        let id = id.as_ref();
        if heads.iter().any(|h: &HebbianHead| h.layer_id == id) {
            return Err(Error::Config(format!("duplicate layer id {id:?}")));
        }
        let z = ep.support.layers.get(id)?;
        heads.push(HebbianHead {
            layer_id: id.to_string(),
            weights: hebb_rule(z, &y, cfg)?,
        });
    }
    EnsembleModel::new(heads)
}

/// Scores query features with every head and fuses the logits in head order.
pub fn predict(model: &EnsembleModel, queries: &Layers) -> Result<Prediction> {
    let per_head = model.head_logits(queries)?;
    let logits = fuse_scores(&per_head, model.fusion)?;
    let labels = argmax_labels(&logits);
    Ok(Prediction { logits, labels })
}
