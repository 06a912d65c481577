//! Soft-margin RBF support vector machine trained by sequential minimal
//! optimization with second-order working-set selection.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Result};
use crate::data::Samples;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    /// `None` means `1 / D`.
    pub gamma: Option<f64>,
    pub tolerance: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 10.0,
            gamma: None,
            tolerance: 1e-3,
        }
    }
}

pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Only rows with a positive multiplier are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support: Vec<Vec<f64>>,
    /// `α_i · y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub width: usize,
}

impl SvmModel {
    pub fn input_width(&self) -> usize {
        self.width
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, a)| a * rbf_kernel(s, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    /// Logistic of the margin with unit slope. Not a calibrated probability;
    /// it crosses one half exactly where the margin changes sign.
    pub fn score(&self, x: &[f64]) -> f64 {
        1.0 / (1.0 + (-self.decision(x)).exp())
    }
}

/// Dual solution over all training rows, alongside the compact model.
#[derive(Debug, Clone)]
pub struct SvmSolution {
    pub model: SvmModel,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Solver {
    y: Vec<f64>,
    kernel: Vec<f64>,
    n: usize,
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    eps: f64,
}

impl Solver {
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.kernel[i * self.n + j]
    }

    fn at_upper(&self, i: usize) -> bool {
        self.alpha[i] >= self.c
    }

    fn at_lower(&self, i: usize) -> bool {
        self.alpha[i] <= 0.0
    }

    fn select(&self) -> Option<(usize, usize)> {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_best = None;
        for t in 0..self.n {
            let v = if self.y[t] > 0.0 {
                (!self.at_upper(t)).then(|| -self.grad[t])
            } else {
                (!self.at_lower(t)).then(|| self.grad[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    i_best = Some(t);
                }
            }
        }
        let i = i_best?;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut obj_min = f64::INFINITY;
        let mut j_best = None;
        for j in 0..self.n {
            let (in_low, gd, neg_yg, sign) = if self.y[j] > 0.0 {
                (!self.at_lower(j), gmax + self.grad[j], self.grad[j], -1.0)
            } else {
                (!self.at_upper(j), gmax - self.grad[j], -self.grad[j], 1.0)
            };
            if !in_low {
                continue;
            }
            gmax2 = gmax2.max(neg_yg);
            if gd > 0.0 {
                let quad = 1.0 + 1.0 + sign * 2.0 * self.y[i] * self.q(i, j);
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(gd * gd) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_best = Some(j);
                }
            }
        }
        if gmax + gmax2 < self.eps {
            return None;
        }
        j_best.map(|j| (i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.q(i, j);
        let (mut a_i, mut a_j) = (old_i, old_j);
        let (ai, aj) = (&mut a_i, &mut a_j);
        if self.y[i] != self.y[j] {
            let quad = (2.0 + 2.0 * qij).max(TAU);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = *ai - *aj;
            *ai += delta;
            *aj += delta;
            if diff > 0.0 {
                if *aj < 0.0 {
                    *aj = 0.0;
                    *ai = diff;
                }
            } else if *ai < 0.0 {
                *ai = 0.0;
                *aj = -diff;
            }
            if diff > 0.0 {
                if *ai > c {
                    *ai = c;
                    *aj = c - diff;
                }
            } else if *aj > c {
                *aj = c;
                *ai = c + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * qij).max(TAU);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = *ai + *aj;
            *ai -= delta;
            *aj += delta;
            if sum > c {
                if *ai > c {
                    *ai = c;
                    *aj = sum - c;
                }
            } else if *aj < 0.0 {
                *aj = 0.0;
                *ai = sum;
            }
            if sum > c {
                if *aj > c {
                    *aj = c;
                    *ai = sum - c;
                }
            } else if *ai < 0.0 {
                *ai = 0.0;
                *aj = sum;
            }
        }
        self.alpha[i] = a_i;
        self.alpha[j] = a_j;
        let di = a_i - old_i;
        let dj = a_j - old_j;
        for k in 0..self.n {
            self.grad[k] += self.q(i, k) * di + self.q(j, k) * dj;
        }
    }

    fn bias(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum) = (0usize, 0.0);
        for i in 0..self.n {
            let yg = self.y[i] * self.grad[i];
            if self.at_upper(i) {
                if self.y[i] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.at_lower(i) {
                if self.y[i] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        let rho = if free > 0 { sum / free as f64 } else { 0.5 * (ub + lb) };
        -rho
    }
}

/// Solves the soft-margin dual to the given KKT tolerance and returns the
/// full multiplier vector.
pub fn solve_svm(train: &Samples, c: f64, gamma: f64, tolerance: f64) -> Result<SvmSolution> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if !(c > 0.0 && gamma > 0.0 && tolerance > 0.0) {
        return Err(ClassifierError::InvalidConfig(
            "C, gamma and tolerance must be positive".into(),
        ));
    }
    let n = train.len();
    let positives = train.positives();
    if positives == 0 || positives == n {
        return Err(ClassifierError::DegenerateLabels);
    }
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        kernel[i * n + i] = 1.0;
        for j in 0..i {
            let k = rbf_kernel(&train.x[i], &train.x[j], gamma);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }
    let mut solver = Solver {
        y: train.y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect(),
        kernel,
        n,
        c,
        alpha: vec![0.0; n],
        grad: vec![-1.0; n],
        eps: tolerance,
    };
    let max_iter = (100 * n).max(10_000_000);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        match solver.select() {
            None => {
                converged = true;
                break;
            }
            Some((i, j)) => solver.update(i, j),
        }
        iterations += 1;
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without reaching tolerance");
    }
    let bias = solver.bias();
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for i in 0..n {
        if solver.alpha[i] > 0.0 {
            support.push(train.x[i].clone());
            coef.push(solver.alpha[i] * solver.y[i]);
        }
    }
    Ok(SvmSolution {
        model: SvmModel {
            support,
            coef,
            bias,
            gamma,
            c,
            width: train.dim(),
        },
        alpha: solver.alpha,
        iterations,
        converged,
    })
}

/// `seed` is accepted for a uniform trainer signature; SMO is deterministic.
pub fn train_svm(train: &Samples, c: f64, gamma: f64, tolerance: f64, _seed: u64) -> Result<SvmModel> {
    solve_svm(train, c, gamma, tolerance).map(|s| s.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, sep: f64, seed: u64) -> Samples {
        let mut rng = rng_from(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = if i % 2 == 0 { -sep } else { sep };
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            x.push(vec![c + 0.5 * a, c + 0.5 * b]);
            y.push((i % 2) as u8);
        }
        Samples::new(x, y)
    }

    /// Independent check of the KKT conditions from the full dual vector.
    fn max_kkt_violation(data: &Samples, sol: &SvmSolution) -> f64 {
        let c = sol.model.c;
        data.x
            .iter()
            .zip(&data.y)
            .zip(&sol.alpha)
            .map(|((x, &l), &a)| {
                let y = if l == 1 { 1.0 } else { -1.0 };
                let margin = y * sol.model.decision(x);
                if a <= 0.0 {
                    (1.0 - margin).max(0.0)
                } else if a >= c {
                    (margin - 1.0).max(0.0)
                } else {
                    (margin - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.3), 1.0);
        assert!((rbf_kernel(&[0.0], &[1.0], 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(rbf_kernel(&[0.0], &[1e3], 1.0) < 1e-300);
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let data = blobs(80, 3.0, 1);
        let m = train_svm(&data, 10.0, 0.5, 1e-3, 0).unwrap();
        for (x, &y) in data.x.iter().zip(&data.y) {
            assert_eq!(u8::from(m.score(x) >= 0.5), y);
        }
    }

    #[test]
    fn dual_feasibility_and_kkt() {
        for seed in 0..5 {
            let data = blobs(120, 0.6, seed);
            let tol = 1e-3;
            let sol = solve_svm(&data, 10.0, 0.5, tol).unwrap();
            assert!(sol.converged);
            let sum: f64 = sol
                .alpha
                .iter()
                .zip(&data.y)
                .map(|(a, &l)| if l == 1 { *a } else { -*a })
                .sum();
            assert!(sum.abs() < tol, "Σαy = {sum}");
            assert!(sol.alpha.iter().all(|&a| (0.0..=10.0).contains(&a)));
            let v = max_kkt_violation(&data, &sol);
            assert!(v < tol, "seed {seed}: KKT violation {v}");
        }
    }

    #[test]
    fn zero_multiplier_rows_do_not_matter() {
        let data = blobs(60, 1.0, 4);
        let m = train_svm(&data, 10.0, 0.5, 1e-3, 0).unwrap();
        let mut padded = m.clone();
        padded.support.push(vec![0.1, 0.2]);
        padded.coef.push(0.0);
        for x in &data.x {
            assert_eq!(m.score(x).to_bits(), padded.score(x).to_bits());
        }
        // only positive multipliers are stored
        assert!(m.coef.iter().all(|&a| a != 0.0 && a.abs() <= m.c));
    }

    #[test]
    fn single_class_is_degenerate() {
        let data = Samples::new(vec![vec![0.0], vec![1.0]], vec![1, 1]);
        assert_eq!(
            train_svm(&data, 1.0, 1.0, 1e-3, 0).unwrap_err(),
            ClassifierError::DegenerateLabels
        );
    }
}
