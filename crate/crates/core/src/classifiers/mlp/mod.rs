//! One-hidden-layer perceptron: tanh hidden units, sigmoid output.

mod lm;
mod prune;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, Result};
use crate::data::Samples;
use crate::rng::rng_from;

pub use lm::{fit_lm, robust_weights, LmConfig, LmReport, StopReason};
pub use prune::{prune_mlp, PruneConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Hidden width before pruning; `None` means inputs + 2.
    pub hidden: Option<usize>,
    pub lm: LmConfig,
    /// `None` disables pruning.
    pub prune: Option<PruneConfig>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: None,
            lm: LmConfig::default(),
            prune: Some(PruneConfig::default()),
        }
    }
}

/// Parameters are laid out as one row `[w_1 .. w_D, bias]` per hidden unit,
/// followed by `[v_1 .. v_H, output bias]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub inputs: usize,
    pub hidden: usize,
    pub w_hidden: Vec<f64>,
    pub w_out: Vec<f64>,
    /// Pruned inputs carry zero weights and are frozen during training.
    pub active_inputs: Vec<bool>,
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Nguyen-Widrow initialization: random hidden rows rescaled to norm
/// `0.7 · H^(1/D)`, hidden biases uniform in `[-β, β]`, small output weights.
pub fn nw_init(inputs: usize, hidden: usize, seed: u64) -> MlpModel {
    assert!(inputs >= 1 && hidden >= 1, "network needs at least one input and one hidden unit");
    let mut rng = rng_from(seed);
    let beta = 0.7 * (hidden as f64).powf(1.0 / inputs as f64);
    let mut w_hidden = Vec::with_capacity(hidden * (inputs + 1));
    for _ in 0..hidden {
        let mut row: Vec<f64> = (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
        while norm == 0.0 {
            row = (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
            norm = row.iter().map(|w| w * w).sum::<f64>().sqrt();
        }
        w_hidden.extend(row.iter().map(|w| beta * w / norm));
        w_hidden.push(rng.random_range(-beta..=beta));
    }
    let w_out = (0..=hidden).map(|_| rng.random_range(-0.5..0.5)).collect();
    MlpModel {
        inputs,
        hidden,
        w_hidden,
        w_out,
        active_inputs: vec![true; inputs],
    }
}

pub fn mlp_forward(model: &MlpModel, x: &[f64]) -> f64 {
    model.forward(x)
}

impl MlpModel {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        MlpModel {
            inputs,
            hidden,
            w_hidden: vec![0.0; hidden * (inputs + 1)],
            w_out: vec![0.0; hidden + 1],
            active_inputs: vec![true; inputs],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_hidden.len() + self.w_out.len()
    }

    pub fn params(&self) -> Vec<f64> {
        self.w_hidden.iter().chain(&self.w_out).copied().collect()
    }

    pub fn set_params(&mut self, theta: &[f64]) {
        let split = self.w_hidden.len();
        self.w_hidden.copy_from_slice(&theta[..split]);
        self.w_out.copy_from_slice(&theta[split..]);
    }

    /// Indices of trainable parameters (weights of pruned inputs excluded).
    pub fn free_parameters(&self) -> Vec<usize> {
        let stride = self.inputs + 1;
        (0..self.param_count())
            .filter(|&p| {
                p >= self.w_hidden.len() || {
                    let k = p % stride;
                    k == self.inputs || self.active_inputs[k]
                }
            })
            .collect()
    }

    pub fn active_input_count(&self) -> usize {
        self.active_inputs.iter().filter(|&&a| a).count()
    }

    fn pre_activation(&self, j: usize, x: &[f64]) -> f64 {
        let row = &self.w_hidden[j * (self.inputs + 1)..(j + 1) * (self.inputs + 1)];
        row[..self.inputs]
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + row[self.inputs]
    }

    /// Output-layer activation before the sigmoid.
    pub fn logit(&self, x: &[f64]) -> f64 {
        (0..self.hidden)
            .map(|j| self.w_out[j] * self.pre_activation(j, x).tanh())
            .sum::<f64>()
            + self.w_out[self.hidden]
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Writes `∂output/∂θ` for every parameter into `grad` and returns the
    /// output.
    pub fn jacobian_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let stride = self.inputs + 1;
        let off = self.w_hidden.len();
        let mut a = self.w_out[self.hidden];
        for j in 0..self.hidden {
            let h = self.pre_activation(j, x).tanh();
            grad[off + j] = h;
            a += self.w_out[j] * h;
        }
        let f = sigmoid(a);
        let fp = f * (1.0 - f);
        for j in 0..self.hidden {
            let h = grad[off + j];
            let back = fp * self.w_out[j] * (1.0 - h * h);
            let row = &mut grad[j * stride..(j + 1) * stride];
            for (g, v) in row[..self.inputs].iter_mut().zip(x) {
                *g = back * v;
            }
            row[self.inputs] = back;
            grad[off + j] = fp * h;
        }
        grad[off + self.hidden] = fp;
        f
    }

    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.param_count()];
        self.jacobian_into(x, &mut g);
        g
    }

    /// Unit `j`'s input weights (without bias).
    pub fn unit_weights(&self, j: usize) -> &[f64] {
        let stride = self.inputs + 1;
        &self.w_hidden[j * stride..j * stride + self.inputs]
    }

    pub(crate) fn remove_hidden(&mut self, j: usize) {
        let stride = self.inputs + 1;
        self.w_hidden.drain(j * stride..(j + 1) * stride);
        self.w_out.remove(j);
        self.hidden -= 1;
    }

    pub(crate) fn remove_input(&mut self, k: usize) {
        let stride = self.inputs + 1;
        self.active_inputs[k] = false;
        for j in 0..self.hidden {
            self.w_hidden[j * stride + k] = 0.0;
        }
    }

    pub fn errors_on(&self, data: &Samples) -> usize {
        data.x
            .iter()
            .zip(&data.y)
            .filter(|(x, &y)| u8::from(self.forward(x) >= 0.5) != y)
            .count()
    }
}

/// Nguyen-Widrow initialization followed by robust Levenberg-Marquardt.
pub fn train_mlp(
    train: &Samples,
    hidden: usize,
    seed: u64,
    config: &LmConfig,
) -> Result<(MlpModel, LmReport)> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if hidden == 0 {
        return Err(ClassifierError::InvalidConfig("hidden width must be positive".into()));
    }
    let mut net = nw_init(train.dim(), hidden, seed);
    let report = fit_lm(&mut net, train, config);
    Ok((net, report))
}
