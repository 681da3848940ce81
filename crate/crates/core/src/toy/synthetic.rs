use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::keyed_rng;

/// Affine input map `x ↦ scale · R(rotation) x + translation · 1`, where
/// `R` rotates every consecutive coordinate pair `(2i, 2i+1)` by the same
/// angle (radians). An odd trailing coordinate is only scaled and shifted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineShift {
    pub rotation: f64,
    pub translation: f64,
    pub scale: f64,
}

impl AffineShift {
    pub fn apply(&self, x: &mut [f64]) {
        rotate_pairs(x, self.rotation);
        for v in x.iter_mut() {
            *v = self.scale * *v + self.translation;
        }
    }

    pub fn invert(&self, x: &mut [f64]) {
        for v in x.iter_mut() {
            *v = (*v - self.translation) / self.scale;
        }
        rotate_pairs(x, -self.rotation);
    }
}

fn rotate_pairs(x: &mut [f64], angle: f64) {
    let (s, c) = angle.sin_cos();
    for pair in x.chunks_exact_mut(2) {
        let (a, b) = (pair[0], pair[1]);
        pair[0] = c * a - s * b;
        pair[1] = s * a + c * b;
    }
}

/// Kind of distribution change applied on top of the source domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shift {
    None,
    /// `p(y)` changes: labels are drawn from `class_weights`, inputs from the
    /// unchanged class-conditional clusters.
    Prior {
        class_weights: Vec<f64>,
    },
    /// `p(x)` changes through an affine map; the labelling rule does not.
    Covariate(AffineShift),
    /// `p(y|x)` changes: a fraction of labels is reassigned to another class.
    Concept {
        flip_fraction: f64,
    },
}

/// Gaussian class clusters in `input_dim` dimensions.
///
/// `seed` fixes the world (the class centres); `draw` selects an independent
/// sample from that world, so a training set and a shifted evaluation domain
/// can share centres without sharing points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub input_dim: usize,
    /// Samples per class; under a prior shift, `classes × samples_per_class`
    /// labels are drawn in total.
    pub samples_per_class: usize,
    pub cluster_spread: f64,
    pub shift: Shift,
    pub seed: u64,
    pub draw: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 || self.input_dim < 1 || self.samples_per_class < 1 {
            return Err(Error::Config(
                "classes, input_dim and samples_per_class must be positive".into(),
            ));
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return Err(Error::Config(format!(
                "cluster spread must be positive, got {}",
                self.cluster_spread
            )));
        }
        match &self.shift {
            Shift::None => {}
            Shift::Prior { class_weights } => {
                if class_weights.len() != self.classes {
                    return Err(Error::Config(format!(
                        "{} class weights for {} classes",
                        class_weights.len(),
                        self.classes
                    )));
                }
                if class_weights.iter().any(|&w| !(w > 0.0)) {
                    return Err(Error::Config("class weights must be positive".into()));
                }
                let total: f64 = class_weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "class weights sum to {total}, not 1"
                    )));
                }
            }
            Shift::Covariate(a) => {
                if !(a.scale > 0.0) || !a.rotation.is_finite() || !a.translation.is_finite() {
                    return Err(Error::Config(
                        "covariate shift needs a positive scale and finite parameters".into(),
                    ));
                }
            }
            Shift::Concept { flip_fraction } => {
                if !(0.0..0.5).contains(flip_fraction) {
                    return Err(Error::Config(format!(
                        "flip fraction {flip_fraction} outside [0, 0.5)"
                    )));
                }
                if *flip_fraction > 0.0 && self.classes < 2 {
                    return Err(Error::Config(
                        "label flips need at least two classes".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Class centres, one row per class, each coordinate standard normal.
    pub fn centers(&self) -> Matrix {
        let mut rng = keyed_rng(self.seed, 0);
        let data = (0..self.classes * self.input_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix::from_vec(self.classes, self.input_dim, data).expect("sized by construction")
    }
}

/// A generated domain: inputs plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let centers = spec.centers();
    let mut rng = keyed_rng(spec.seed, 1 + spec.draw);
    let total = spec.classes * spec.samples_per_class;

    let mut labels: Vec<usize> = match &spec.shift {
        Shift::Prior { class_weights } => {
            let dist =
                WeightedIndex::new(class_weights).map_err(|e| Error::Config(e.to_string()))?;
            (0..total).map(|_| dist.sample(&mut rng)).collect()
        }
        _ => (0..spec.classes)
            .flat_map(|c| std::iter::repeat(c).take(spec.samples_per_class))
            .collect(),
    };

    let mut inputs = Matrix::zeros(total, spec.input_dim);
    for (i, &y) in labels.iter().enumerate() {
        let center = centers.row(y);
        for (v, &c) in inputs.row_mut(i).iter_mut().zip(center) {
            *v = c + spec.cluster_spread * rng.sample::<f64, _>(StandardNormal);
        }
    }

    match &spec.shift {
        Shift::Covariate(affine) => {
            for i in 0..total {
                affine.apply(inputs.row_mut(i));
            }
        }
        Shift::Concept { flip_fraction } => {
            let flips = (flip_fraction * total as f64).round() as usize;
            let chosen = rand::seq::index::sample(&mut rng, total, flips);
            for i in chosen.iter() {
                let offset = rng.random_range(1..spec.classes);
                labels[i] = (labels[i] + offset) % spec.classes;
            }
        }
        Shift::None | Shift::Prior { .. } => {}
    }

    Ok(SyntheticData { inputs, labels })
}
