use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hebbian::{accuracy, argmax_labels};
use crate::linalg::{softmax_rows, summed_cross_entropy, Matrix};
use crate::rng::keyed_rng;

/// Fully connected layer, `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul_t(&self.weights)?;
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }
}

/// A rectifier MLP; every hidden layer's activations are exposed as features.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBackbone {
    layers: Vec<Dense>,
}

fn relu_in_place(m: &mut Matrix) {
    for r in 0..m.rows() {
        for v in m.row_mut(r) {
            *v = v.max(0.0);
        }
    }
}

impl MlpBackbone {
    /// Weights uniform in `±1/√fan_in`, biases zero. `dims` runs from the
    /// input width to the number of classes.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {dims:?}")));
        }
        let mut rng = keyed_rng(seed, 0);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Dense {
                    weights: Matrix::from_vec(fan_out, fan_in, data).expect("sized"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(MlpBackbone { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Input width followed by every layer's output width.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].weights.cols())
            .chain(self.layers.iter().map(|l| l.weights.rows()))
            .collect()
    }

    /// `h1, h2, …` for hidden layers, then `out` for the logits.
    pub fn layer_ids(&self) -> Vec<String> {
        let hidden = self.layers.len() - 1;
        (1..=hidden)
            .map(|i| format!("h{i}"))
            .chain(std::iter::once("out".to_string()))
            .collect()
    }

    /// Post-activation output of every hidden layer, then the raw logits.
    pub fn forward(&self, inputs: &Matrix) -> Result<Vec<Matrix>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&x)?;
            if i < last {
                relu_in_place(&mut y);
            }
            acts.push(y.clone());
            x = y;
        }
        Ok(acts)
    }

    pub fn predict(&self, inputs: &Matrix) -> Result<Vec<usize>> {
        let acts = self.forward(inputs)?;
        Ok(argmax_labels(acts.last().expect("at least one layer")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![64, 64, 32],
            epochs: 30,
            lr: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedBackbone {
    pub backbone: MlpBackbone,
    pub train_accuracy: f64,
    /// Mean per-sample cross-entropy over the last epoch.
    pub final_loss: f64,
}

/// Mini-batch gradient descent on the mean softmax cross-entropy of each
/// batch. Samples are reshuffled every epoch from a stream keyed by `seed`.
pub fn train_backbone(
    inputs: &Matrix,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainedBackbone> {
    if inputs.rows() != labels.len() || labels.is_empty() {
        return Err(Error::shape("train_backbone", inputs.rows(), labels.len()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if classes < 2 {
        return Err(Error::Config(
            "backbone training needs at least two classes".into(),
        ));
    }
    if cfg.batch_size == 0 || !(cfg.lr >= 0.0) {
        return Err(Error::Config(
            "batch size must be positive and lr non-negative".into(),
        ));
    }
    let dims: Vec<usize> = std::iter::once(inputs.cols())
        .chain(cfg.hidden.iter().copied())
        .chain(std::iter::once(classes))
        .collect();
    let mut net = MlpBackbone::init(&dims, cfg.seed)?;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    let mut shuffle_rng = keyed_rng(cfg.seed, 1);
    let mut final_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = inputs.select_rows(batch);
            let batch_labels: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let y = Matrix::one_hot(&batch_labels, classes)?;
            epoch_loss += sgd_step(&mut net, &x, &y, cfg.lr)?;
        }
        final_loss = epoch_loss / labels.len() as f64;
        if !final_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
    }

    let train_accuracy = accuracy(&net.predict(inputs)?, labels)?;
    Ok(TrainedBackbone {
        backbone: net,
        train_accuracy,
        final_loss,
    })
}

/// One update on a batch; returns the batch's summed loss before the update.
fn sgd_step(net: &mut MlpBackbone, x: &Matrix, y: &Matrix, lr: f64) -> Result<f64> {
    let acts = net.forward(x)?;
    let logits = acts.last().expect("non-empty");
    let loss = summed_cross_entropy(y, logits)?;
    let batch = x.rows() as f64;
    let mut delta = softmax_rows(logits).sub(y)?.scale(1.0 / batch);

    for l in (0..net.layers.len()).rev() {
        let input = if l == 0 { x } else { &acts[l - 1] };
        let grad_w = delta.t_matmul(input)?;
        let grad_b: Vec<f64> = (0..delta.cols())
            .map(|c| (0..delta.rows()).map(|r| delta[(r, c)]).sum())
            .collect();
        if l > 0 {
            let mut back = delta.matmul(&net.layers[l].weights)?;
            let pre = &acts[l - 1];
            for r in 0..back.rows() {
                for (g, &a) in back.row_mut(r).iter_mut().zip(pre.row(r)) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = back;
        }
        let layer = &mut net.layers[l];
        layer.weights.axpy(-lr, &grad_w)?;
        for (b, g) in layer.bias.iter_mut().zip(grad_b) {
            *b -= lr * g;
        }
    }
    Ok(loss)
}
