//! Robust Levenberg-Marquardt for the perceptron.
//!
//! Each iteration reweights the squared residuals with Tukey's bisquare at
//! scale `1.4826 · MAD`, then takes damped Gauss-Newton steps on the
//! weighted criterion. Damping shrinks after an accepted step and grows after
//! a rejected one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MlpModel;
use crate::data::Samples;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub max_iter: usize,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub lambda_max: f64,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// `false` gives ordinary least squares.
    pub robust: bool,
    pub tukey_c: f64,
    /// Lower bound on the residual scale. Targets are 0/1 and outputs lie in
    /// (0, 1), so residuals never exceed 1; the floor stops a tight fit on
    /// the majority class from zero-weighting every minority row.
    pub min_scale: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iter: 100,
            lambda_init: 1e-2,
            lambda_factor: 10.0,
            lambda_max: 1e10,
            grad_tol: 1e-7,
            step_tol: 1e-9,
            robust: true,
            tukey_c: 4.685,
            min_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    StepSize,
    DampingLimit,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub iterations: usize,
    pub reason: StopReason,
    /// False when the iteration budget ran out; the returned weights are the
    /// best reached.
    pub converged: bool,
    /// Weighted criterion at the returned weights.
    pub cost: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Tukey bisquare weights of the residuals at scale
/// `max(1.4826 · MAD, min_scale)`.
pub fn robust_weights(residuals: &[f64], config: &LmConfig) -> Vec<f64> {
    if !config.robust || residuals.is_empty() {
        return vec![1.0; residuals.len()];
    }
    let mut buf = residuals.to_vec();
    let med = median(&mut buf);
    for (b, r) in buf.iter_mut().zip(residuals) {
        *b = (r - med).abs();
    }
    let mad = median(&mut buf);
    let scale = (1.4826 * mad).max(config.min_scale);
    residuals
        .iter()
        .map(|r| {
            let u = r / (config.tukey_c * scale);
            if u.abs() < 1.0 {
                (1.0 - u * u).powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

fn weighted_cost(net: &MlpModel, data: &Samples, weights: &[f64]) -> f64 {
    data.x
        .iter()
        .zip(&data.y)
        .zip(weights)
        .map(|((x, &y), w)| {
            let r = y as f64 - net.forward(x);
            w * r * r
        })
        .sum()
}

/// Normal-equation products for one linearization, reused across damping
/// retries. When there are more parameters than rows the dual form
/// `δ = Bᵀ (BBᵀ + λI)⁻¹ s` is cheaper than `(BᵀB + λI) δ = Bᵀs`.
enum Normal {
    Primal { ata: DMatrix<f64>, g: DVector<f64> },
    Dual { bbt: DMatrix<f64> },
}

impl Normal {
    fn new(b: &DMatrix<f64>, g: &DVector<f64>) -> Self {
        let (n, p) = b.shape();
        if p <= n {
            Normal::Primal {
                ata: b.transpose() * b,
                g: g.clone(),
            }
        } else {
            Normal::Dual {
                bbt: b * b.transpose(),
            }
        }
    }

    fn step(&self, b: &DMatrix<f64>, s: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
        match self {
            Normal::Primal { ata, g } => {
                let mut a = ata.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += lambda;
                }
                a.cholesky().map(|c| c.solve(g))
            }
            Normal::Dual { bbt } => {
                let mut k = bbt.clone();
                for i in 0..k.nrows() {
                    k[(i, i)] += lambda;
                }
                k.cholesky().map(|c| b.tr_mul(&c.solve(s)))
            }
        }
    }
}

/// Trains the free parameters of `net` in place.
pub fn fit_lm(net: &mut MlpModel, data: &Samples, config: &LmConfig) -> LmReport {
    let free = net.free_parameters();
    let n = data.len();
    let p = free.len();
    let mut lambda = config.lambda_init;
    let mut grad = vec![0.0; net.param_count()];
    let mut b = DMatrix::<f64>::zeros(n, p);
    let mut s = DVector::<f64>::zeros(n);
    let mut residuals = vec![0.0; n];
    let mut cost = f64::INFINITY;

    for iter in 0..config.max_iter {
        let mut jac_rows: Vec<f64> = Vec::with_capacity(n * p);
        for (i, x) in data.x.iter().enumerate() {
            let f = net.jacobian_into(x, &mut grad);
            residuals[i] = data.y[i] as f64 - f;
            jac_rows.extend(free.iter().map(|&q| grad[q]));
        }
        let weights = robust_weights(&residuals, config);
        cost = residuals.iter().zip(&weights).map(|(r, w)| w * r * r).sum();
        for i in 0..n {
            let sw = weights[i].sqrt();
            s[i] = sw * residuals[i];
            for c in 0..p {
                b[(i, c)] = sw * jac_rows[i * p + c];
            }
        }
        let gradient = b.tr_mul(&s);
        if gradient.amax() < config.grad_tol {
            return LmReport {
                iterations: iter,
                reason: StopReason::Gradient,
                converged: true,
                cost,
            };
        }

        let theta = net.params();
        let normal = Normal::new(&b, &gradient);
        let accepted = loop {
            if lambda > config.lambda_max {
                break None;
            }
            if let Some(delta) = normal.step(&b, &s, lambda) {
                let mut trial = theta.clone();
                for (c, &q) in free.iter().enumerate() {
                    trial[q] += delta[c];
                }
                net.set_params(&trial);
                let trial_cost = weighted_cost(net, data, &weights);
                if trial_cost.is_finite() && trial_cost < cost {
                    lambda = (lambda / config.lambda_factor).max(1e-12);
                    cost = trial_cost;
                    break Some(delta.norm());
                }
            }
            lambda *= config.lambda_factor;
        };
        let Some(step) = accepted else {
            net.set_params(&theta);
            return LmReport {
                iterations: iter,
                reason: StopReason::DampingLimit,
                converged: true,
                cost,
            };
        };
        let scale = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if step < config.step_tol * (1.0 + scale) {
            return LmReport {
                iterations: iter + 1,
                reason: StopReason::StepSize,
                converged: true,
                cost,
            };
        }
    }
    LmReport {
        iterations: config.max_iter,
        reason: StopReason::MaxIterations,
        converged: false,
        cost,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::mlp::{nw_init, train_mlp};

    fn xor() -> Samples {
        Samples::new(
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![0, 1, 1, 0],
        )
    }

    #[test]
    fn xor_solved_by_best_of_ten_restarts() {
        let data = xor();
        let best = (0..10)
            .map(|seed| {
                let (net, _) = train_mlp(&data, 2, seed, &LmConfig::default()).unwrap();
                net.errors_on(&data)
            })
            .min()
            .unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn constant_labels_are_learned() {
        let data = Samples::new(
            (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect(),
            vec![1; 20],
        );
        let (net, _) = train_mlp(&data, 3, 1, &LmConfig::default()).unwrap();
        assert_eq!(net.errors_on(&data), 0);
        assert!(net.forward(&[0.3]) > 0.9);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let data = xor();
        let config = LmConfig {
            max_iter: 1,
            ..LmConfig::default()
        };
        let mut net = nw_init(2, 3, 4);
        let before = weighted_cost(&net, &data, &[1.0; 4]);
        let report = fit_lm(&mut net, &data, &config);
        assert_eq!(report.reason, StopReason::MaxIterations);
        assert!(!report.converged);
        assert!(weighted_cost(&net, &data, &[1.0; 4]).is_finite());
        assert!(report.cost <= before);
    }

    #[test]
    fn bisquare_weights() {
        let config = LmConfig {
            min_scale: 0.0,
            ..LmConfig::default()
        };
        let mut r: Vec<f64> = (0..99).map(|i| (i as f64 - 49.0) / 100.0).collect();
        r.push(50.0);
        let w = robust_weights(&r, &config);
        assert_eq!(w[99], 0.0);
        assert!(w[49] == 1.0);
        assert!(w.iter().all(|&w| (0.0..=1.0).contains(&w)));
        let plain = robust_weights(&r, &LmConfig { robust: false, ..config });
        assert!(plain.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn wide_network_uses_dual_solve() {
        // more parameters than rows
        let data = Samples::new(
            (0..6).map(|i| vec![i as f64, (i * i) as f64 / 10.0, 1.0]).collect(),
            vec![0, 0, 1, 1, 0, 1],
        );
        let (net, report) = train_mlp(&data, 8, 2, &LmConfig::default()).unwrap();
        assert!(net.param_count() > data.len());
        assert!(report.cost.is_finite());
        assert_eq!(net.errors_on(&data), 0);
    }
}
