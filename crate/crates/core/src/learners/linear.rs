//! Linear learner trained by mini-batch gradient descent with L2 regularization.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gbt::sigmoid;
use super::LearnerError;
use crate::matrix::NumericMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logistic,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

/// Parameter layout: `n_out` rows of `n_features` weights followed by `n_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub link: Link,
    pub n_features: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Regression targets are standardized during training; predictions are mapped back.
    pub target_mean: f64,
    pub target_scale: f64,
}

impl LinearModel {
    pub fn zeros(link: Link, n_features: usize, n_out: usize) -> Self {
        Self {
            link,
            n_features,
            n_out,
            weights: vec![0.0; n_features * n_out],
            bias: vec![0.0; n_out],
            target_mean: 0.0,
            target_scale: 1.0,
        }
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|k| {
                let w = &self.weights[k * self.n_features..(k + 1) * self.n_features];
                self.bias[k] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Weighted mean loss plus `0.5 * l2 * ||W||^2` over the given rows, and its
/// gradient in the flat layout `[weights..., biases...]`.
pub fn objective_and_gradient(
    model: &LinearModel,
    x: &NumericMatrix,
    y: &[f64],
    w: &[f64],
    rows: &[usize],
    l2: f64,
) -> (f64, Vec<f64>) {
    let d = model.n_features;
    let k_out = model.n_out;
    let mut grad = vec![0.0; d * k_out + k_out];
    let mut loss = 0.0;
    let total_w: f64 = rows.iter().map(|&i| w[i]).sum::<f64>().max(f64::MIN_POSITIVE);
    for &i in rows {
        let row = x.row(i);
        let scores = model.scores(row);
        let wi = w[i] / total_w;
        // dloss/dscore per output
        let dscore: Vec<f64> = match model.link {
            Link::Identity => {
                let r = scores[0] - y[i];
                loss += wi * 0.5 * r * r;
                vec![r]
            }
            Link::Logistic => {
                let m = scores[0];
                let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
                loss += wi * (softplus - y[i] * m);
                vec![sigmoid(m) - y[i]]
            }
            Link::Softmax => {
                let p = softmax(&scores);
                let class = y[i] as usize;
                loss -= wi * p[class].max(1e-300).ln();
                p.iter()
                    .enumerate()
                    .map(|(k, pk)| pk - if k == class { 1.0 } else { 0.0 })
                    .collect()
            }
        };
        for (k, ds) in dscore.iter().enumerate() {
            let g = wi * ds;
            let gw = &mut grad[k * d..(k + 1) * d];
            for (gj, xj) in gw.iter_mut().zip(row) {
                *gj += g * xj;
            }
            grad[d * k_out + k] += g;
        }
    }
    let norm: f64 = model.weights.iter().map(|v| v * v).sum();
    loss += 0.5 * l2 * norm;
    for (g, v) in grad.iter_mut().zip(&model.weights) {
        *g += l2 * v;
    }
    (loss, grad)
}

pub fn fit_linear(
    x: &NumericMatrix,
    y: &[f64],
    w: &[f64],
    link: Link,
    n_out: usize,
    params: &LinearParams,
    seed: u64,
) -> Result<LinearModel, LearnerError> {
    let n = x.n_rows();
    if n == 0 {
        return Err(LearnerError::EmptyTrainingSet);
    }
    let mut model = LinearModel::zeros(link, x.n_cols(), n_out);
    let mut targets = y.to_vec();
    if link == Link::Identity {
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        targets.iter_mut().for_each(|v| *v = (*v - mean) / scale);
        model.target_mean = mean;
        model.target_scale = scale;
    }
    let d = model.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = params.batch_size.max(1);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let (_, grad) = objective_and_gradient(&model, x, &targets, w, chunk, params.l2);
            for (p, g) in model.weights.iter_mut().zip(&grad[..d * n_out]) {
                *p -= params.learning_rate * g;
            }
            for (p, g) in model.bias.iter_mut().zip(&grad[d * n_out..]) {
                *p -= params.learning_rate * g;
            }
        }
        if !model.weights.iter().chain(&model.bias).all(|v| v.is_finite()) {
            return Err(LearnerError::Diverged);
        }
    }
    Ok(model)
}
