#![allow(dead_code)]

use hebbfuse::features::{FeatureSet, Layers};
use hebbfuse::rng::keyed_rng;
use hebbfuse::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    keyed_rng(seed, 0xdead)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n)
        .map(|i| {
            if i < classes {
                i
            } else {
                rng.random_range(0..classes)
            }
        })
        .collect()
}

/// Separate clusters around distinct corners, with three layers of different widths.
pub fn clustered_set(classes: usize, per_class: usize, seed: u64) -> FeatureSet {
    let mut r = rng(seed);
    let n = classes * per_class;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut layers = Layers::new();
    for (id, dim) in [("a", 6), ("b", 3), ("c", 9)] {
        let mut m = uniform(&mut r, n, dim, 0.3);
        for i in 0..n {
            let row = m.row_mut(i);
            row[labels[i] % dim] += 2.0;
            row[(labels[i] / dim) % dim] += 1.0;
        }
        layers.push(id, m).unwrap();
    }
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    FeatureSet::new("fixture", names, labels, layers).unwrap()
}

/// Summed softmax cross-entropy of `Z Wᵀ` written out directly.
pub fn summed_ce(z: &Matrix, labels: &[usize], w: &Matrix) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let logits: Vec<f64> = (0..w.rows())
            .map(|k| (0..z.cols()).map(|d| z[(i, d)] * w[(k, d)]).sum())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        total += lse - logits[y];
    }
    total
}

/// Central finite-difference gradient of [`summed_ce`] with respect to `W`.
pub fn fd_grad(z: &Matrix, labels: &[usize], w: &Matrix, h: f64) -> Matrix {
    let mut g = Matrix::zeros(w.rows(), w.cols());
    let mut wp = w.clone();
    for k in 0..w.rows() {
        for d in 0..w.cols() {
            let orig = w[(k, d)];
            wp.row_mut(k)[d] = orig + h;
            let up = summed_ce(z, labels, &wp);
            wp.row_mut(k)[d] = orig - h;
            let down = summed_ce(z, labels, &wp);
            wp.row_mut(k)[d] = orig;
            g.row_mut(k)[d] = (up - down) / (2.0 * h);
        }
    }
    g
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let diff = a.sub(b).unwrap().frobenius_norm();
    diff / b.frobenius_norm().max(1e-300)
}
