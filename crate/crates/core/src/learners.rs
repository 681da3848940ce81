//! Non-Hebbian heads and the fit/score interface every learner shares.
//!
//! Layer ensembles are formed the same way for every learner: each layer gets
//! its own fitted head and the per-layer score matrices are summed. For the
//! Hebbian and ridge heads the scores are logits; for k-NN they are the
//! class frequencies among the k nearest support rows.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hebbian::{argmax_labels, hebb_rule, HebbianConfig};
use crate::linalg::{cholesky_solve, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

impl KnnConfig {
    pub fn validate(&self, support_size: usize) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.k > support_size {
            return Err(Error::Config(format!(
                "k = {} exceeds the support size {support_size}",
                self.k
            )));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Brute-force k-nearest-neighbour classification under euclidean distance.
///
/// Returns per-query class frequencies among the k nearest support rows and
/// the argmax label. Equal distances at the k-th place are resolved in favour
/// of the lower support row index; equal frequencies in favour of the lower
/// class index.
pub fn knn_predict(
    support: &Matrix,
    support_labels: &[usize],
    queries: &Matrix,
    ways: usize,
    cfg: &KnnConfig,
) -> Result<(Matrix, Vec<usize>)> {
    cfg.validate(support.rows())?;
    if support_labels.len() != support.rows() {
        return Err(Error::shape(
            "knn_predict",
            support.rows(),
            support_labels.len(),
        ));
    }
    if support.cols() != queries.cols() {
        return Err(Error::shape("knn_predict", support.cols(), queries.cols()));
    }
    if let Some(&bad) = support_labels.iter().find(|&&y| y >= ways) {
        return Err(Error::InvalidData(format!(
            "support label {bad} out of range for {ways} classes"
        )));
    }
    let k = cfg.k;
    let mut scores = Matrix::zeros(queries.rows(), ways);
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(support.rows());
    for q in 0..queries.rows() {
        let query = queries.row(q);
        keyed.clear();
        keyed.extend(
            support
                .row_iter()
                .enumerate()
                .map(|(i, s)| (sq_dist(query, s), i)),
        );
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < keyed.len() {
            keyed.select_nth_unstable_by(k - 1, by_key);
        }
        for &(_, i) in &keyed[..k] {
            scores[(q, support_labels[i])] += 1.0;
        }
        for v in scores.row_mut(q) {
            *v /= k as f64;
        }
    }
    let labels = argmax_labels(&scores);
    Ok((scores, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub lambda: f64,
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Closed-form ridge head `W = Yᵀ Z (ZᵀZ + λI)⁻¹`, minimizing
/// `‖Y − Z Wᵀ‖² + λ‖W‖²`.
///
/// With `λ > 0` and fewer samples than features the equivalent dual form
/// `W = Yᵀ (Z Zᵀ + λI)⁻¹ Z` is solved instead, which only needs an `S × S`
/// system.
pub fn ridge_fit(z: &Matrix, y_onehot: &Matrix, cfg: &RidgeConfig) -> Result<Matrix> {
    cfg.validate()?;
    if z.rows() != y_onehot.rows() {
        return Err(Error::shape(
            "ridge_fit",
            format!("{} label rows", z.rows()),
            y_onehot.rows(),
        ));
    }
    let add_ridge = |mut g: Matrix| {
        for i in 0..g.rows() {
            g[(i, i)] += cfg.lambda;
        }
        g
    };
    if cfg.lambda > 0.0 && z.rows() < z.cols() {
        let gram = add_ridge(z.matmul_t(z)?);
        let a = cholesky_solve(&gram, y_onehot)?;
        a.t_matmul(z)
    } else {
        let gram = add_ridge(z.t_matmul(z)?);
        let rhs = z.t_matmul(y_onehot)?;
        Ok(cholesky_solve(&gram, &rhs)?.transpose())
    }
}

/// Which learner to attach to each layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnerKind {
    Hebbian(HebbianConfig),
    Knn(KnnConfig),
    Ridge(RidgeConfig),
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerKind::Hebbian(c) => write!(f, "hebbian(alpha={},steps={})", c.alpha, c.steps),
            LearnerKind::Knn(c) => write!(f, "knn(k={})", c.k),
            LearnerKind::Ridge(c) => write!(f, "ridge(lambda={})", c.lambda),
        }
    }
}

/// A learner fitted on one layer's support set.
pub trait FittedHead: Send + Sync {
    /// `queries.rows() × ways` class scores.
    fn score(&self, queries: &Matrix) -> Result<Matrix>;
}

/// Fits a head on one layer's support features.
pub trait Learner: Send + Sync {
    fn kind(&self) -> LearnerKind;

    fn fit(&self, support: &Matrix, labels: &[usize], ways: usize) -> Result<Box<dyn FittedHead>>;
}

struct LinearHead {
    weights: Matrix,
}

impl FittedHead for LinearHead {
    fn score(&self, queries: &Matrix) -> Result<Matrix> {
        queries.matmul_t(&self.weights)
    }
}

struct KnnHead {
    support: Matrix,
    labels: Vec<usize>,
    ways: usize,
    cfg: KnnConfig,
}

impl FittedHead for KnnHead {
    fn score(&self, queries: &Matrix) -> Result<Matrix> {
        knn_predict(&self.support, &self.labels, queries, self.ways, &self.cfg).map(|(s, _)| s)
    }
}

struct HebbianLearner(HebbianConfig);
struct KnnLearner(KnnConfig);
struct RidgeLearner(RidgeConfig);

impl Learner for HebbianLearner {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Hebbian(self.0)
    }

    fn fit(&self, support: &Matrix, labels: &[usize], ways: usize) -> Result<Box<dyn FittedHead>> {
        let y = Matrix::one_hot(labels, ways)?;
        Ok(Box::new(LinearHead {
            weights: hebb_rule(support, &y, &self.0)?,
        }))
    }
}

impl Learner for KnnLearner {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Knn(self.0)
    }

    fn fit(&self, support: &Matrix, labels: &[usize], ways: usize) -> Result<Box<dyn FittedHead>> {
        self.0.validate(support.rows())?;
        if labels.len() != support.rows() {
            return Err(Error::shape("knn fit", support.rows(), labels.len()));
        }
        Ok(Box::new(KnnHead {
            support: support.clone(),
            labels: labels.to_vec(),
            ways,
            cfg: self.0,
        }))
    }
}

impl Learner for RidgeLearner {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Ridge(self.0)
    }

    fn fit(&self, support: &Matrix, labels: &[usize], ways: usize) -> Result<Box<dyn FittedHead>> {
        let y = Matrix::one_hot(labels, ways)?;
        Ok(Box::new(LinearHead {
            weights: ridge_fit(support, &y, &self.0)?,
        }))
    }
}

/// Builds the learner for `kind`, validating what can be checked up front.
/// Constraints that depend on the support set (k ≤ support size) are checked
/// at fit time.
pub fn learner_for(kind: LearnerKind) -> Result<Box<dyn Learner>> {
    Ok(match kind {
        LearnerKind::Hebbian(c) => {
            c.validate()?;
            Box::new(HebbianLearner(c))
        }
        LearnerKind::Knn(c) => {
            if c.k < 1 {
                return Err(Error::Config("k must be at least 1".into()));
            }
            Box::new(KnnLearner(c))
        }
        LearnerKind::Ridge(c) => {
            c.validate()?;
            Box::new(RidgeLearner(c))
        }
    })
}
