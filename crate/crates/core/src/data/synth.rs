//! Synthetic factor/defect data with a known logistic mechanism.
//!
//! Factor distributions:
//! * continuous factor with bounds `[lo, hi]`: normal with mean
//!   `(lo + hi) / 2` and standard deviation `(hi - lo) / 6`, clamped to the
//!   bounds;
//! * discrete factor: uniform over its states.
//!
//! Every factor maps to a normalized value `u`: `(x - centre) / spread` for
//! continuous factors, and for discrete factors the state index rescaled
//! onto `[-1, 1]`. The defect log-odds of a row are
//!
//! ```text
//! logit = b0 + Σ linear_j·u_j + Σ quadratic_j·u_j² + w·u_a·u_b + ε,   ε ~ N(0, noise_sd²)
//! ```
//!
//! and the label is drawn from `Bernoulli(sigmoid(logit))`. The intercept
//! `b0` is found by bisection so that the mean defect probability of the
//! drawn rows equals the requested target.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, FactorKind, Result, Schema};
use crate::rng::{derive_seed, rng_from};

const LINEAR_CONTINUOUS: [f64; 9] = [0.9, -0.7, 0.6, 0.8, -0.8, 1.0, 0.7, -0.5, 0.9];
const LINEAR_DISCRETE: [f64; 2] = [0.8, -0.6];
const QUADRATIC_CONTROLLABLE: f64 = 0.6;
const INTERACTION: f64 = 0.9;
const NOISE_SD: f64 = 0.5;
const SIGNAL_SCALE: f64 = 1.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
    /// `(factor a, factor b, weight)`
    pub interaction: Option<(usize, usize, f64)>,
    pub noise_sd: f64,
    pub intercept: f64,
}

impl GroundTruth {
    /// Coefficients depend only on the schema, never on the seed.
    pub fn for_schema(schema: &Schema) -> Self {
        let mut linear = Vec::with_capacity(schema.factors.len());
        let mut quadratic = Vec::with_capacity(schema.factors.len());
        let (mut nc, mut nd) = (0, 0);
        for f in &schema.factors {
            match f.kind {
                FactorKind::Continuous { .. } => {
                    linear.push(SIGNAL_SCALE * LINEAR_CONTINUOUS[nc % LINEAR_CONTINUOUS.len()]);
                    quadratic.push(if f.controllable {
                        SIGNAL_SCALE * QUADRATIC_CONTROLLABLE
                    } else {
                        0.0
                    });
                    nc += 1;
                }
                FactorKind::Discrete { .. } => {
                    linear.push(SIGNAL_SCALE * LINEAR_DISCRETE[nd % LINEAR_DISCRETE.len()]);
                    quadratic.push(0.0);
                    nd += 1;
                }
            }
        }
        let continuous = |controllable: bool| {
            schema
                .factors
                .iter()
                .position(|f| f.is_continuous() && f.controllable == controllable)
        };
        let interaction = match (continuous(true), continuous(false)) {
            (Some(a), Some(b)) => Some((a.min(b), a.max(b), SIGNAL_SCALE * INTERACTION)),
            _ if schema.factors.len() >= 2 => Some((0, 1, SIGNAL_SCALE * INTERACTION)),
            _ => None,
        };
        GroundTruth {
            linear,
            quadratic,
            interaction,
            noise_sd: NOISE_SD,
            intercept: 0.0,
        }
    }

    /// Normalized factor values of a natural-unit row.
    pub fn normalize(schema: &Schema, row: &[f64]) -> Vec<f64> {
        schema
            .factors
            .iter()
            .zip(row)
            .map(|(f, &x)| match &f.kind {
                FactorKind::Continuous { bounds } => {
                    let centre = 0.5 * (bounds[0] + bounds[1]);
                    (x - centre) / ((bounds[1] - bounds[0]) / 6.0)
                }
                FactorKind::Discrete { states } => {
                    let i = f.state_index(x).unwrap_or(0) as f64;
                    let half = 0.5 * (states.len() - 1) as f64;
                    (i - half) / half
                }
            })
            .collect()
    }

    /// Noise-free log-odds of a row, excluding the intercept.
    pub fn signal(&self, schema: &Schema, row: &[f64]) -> f64 {
        let u = Self::normalize(schema, row);
        let mut s: f64 = u
            .iter()
            .zip(self.linear.iter().zip(&self.quadratic))
            .map(|(&u, (&l, &q))| l * u + q * u * u)
            .sum();
        if let Some((a, b, w)) = self.interaction {
            s += w * u[a] * u[b];
        }
        s
    }

    /// Noise-free defect probability of a row.
    pub fn probability(&self, schema: &Schema, row: &[f64]) -> f64 {
        sigmoid(self.intercept + self.signal(schema, row))
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn draw_row(schema: &Schema, rng: &mut impl Rng) -> Vec<f64> {
    schema
        .factors
        .iter()
        .map(|f| match &f.kind {
            FactorKind::Continuous { bounds } => {
                let centre = 0.5 * (bounds[0] + bounds[1]);
                let spread = (bounds[1] - bounds[0]) / 6.0;
                let z: f64 = rng.sample(StandardNormal);
                (centre + spread * z).clamp(bounds[0], bounds[1])
            }
            FactorKind::Discrete { states } => states[rng.random_range(0..states.len())],
        })
        .collect()
}

/// Draws `n` labeled rows whose defect rate is calibrated to the target.
/// Returns the dataset and the calibrated mechanism.
pub fn synth_generate(
    schema: &Schema,
    n: usize,
    defect_rate_target: f64,
    seed: u64,
) -> Result<(Dataset, GroundTruth)> {
    schema.validate()?;
    if n == 0 {
        return Err(DataError::Empty);
    }
    if !(defect_rate_target > 0.0 && defect_rate_target < 1.0) {
        return Err(DataError::UnsatisfiableTarget(defect_rate_target));
    }
    let mut rows_rng = rng_from(derive_seed(seed, &[0]));
    let mut noise_rng = rng_from(derive_seed(seed, &[1]));
    let mut label_rng = rng_from(derive_seed(seed, &[2]));

    let mut truth = GroundTruth::for_schema(schema);
    let raw: Vec<Vec<f64>> = (0..n).map(|_| draw_row(schema, &mut rows_rng)).collect();
    let eta: Vec<f64> = raw
        .iter()
        .map(|r| {
            let e: f64 = noise_rng.sample(StandardNormal);
            truth.signal(schema, r) + truth.noise_sd * e
        })
        .collect();

    let mean_rate = |b0: f64| eta.iter().map(|&e| sigmoid(b0 + e)).sum::<f64>() / n as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    if !(mean_rate(lo) < defect_rate_target && defect_rate_target < mean_rate(hi)) {
        return Err(DataError::UnsatisfiableTarget(defect_rate_target));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_rate(mid) < defect_rate_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    truth.intercept = 0.5 * (lo + hi);

    let labels: Vec<u8> = eta
        .iter()
        .map(|&e| u8::from(label_rng.random::<f64>() < sigmoid(truth.intercept + e)))
        .collect();
    let dataset = Dataset::new(schema.clone(), raw, labels)?;
    Ok((dataset, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scale_defect_rate_in_band() {
        let schema = Schema::lacquering();
        for seed in 0..5 {
            let (d, _) = synth_generate(&schema, 2270, 0.12, seed).unwrap();
            let rate = d.defect_rate();
            assert!((0.09..=0.15).contains(&rate), "seed {seed}: {rate}");
            assert_eq!(d.width(), 15);
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let schema = Schema::lacquering();
        let (a, ta) = synth_generate(&schema, 300, 0.2, 17).unwrap();
        let (b, tb) = synth_generate(&schema, 300, 0.2, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&ta).unwrap(),
            serde_json::to_string(&tb).unwrap()
        );
    }

    #[test]
    fn single_row() {
        let (d, _) = synth_generate(&Schema::lacquering(), 1, 0.12, 3).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.labels()[0] <= 1);
    }

    #[test]
    fn rows_respect_schema() {
        let schema = Schema::lacquering();
        let (d, _) = synth_generate(&schema, 500, 0.12, 8).unwrap();
        for row in d.raw() {
            for (f, &v) in schema.factors.iter().zip(row) {
                assert!(f.admits(v), "{} = {v}", f.name);
            }
        }
    }

    #[test]
    fn mechanism_has_an_interaction() {
        let t = GroundTruth::for_schema(&Schema::lacquering());
        let (a, b, w) = t.interaction.unwrap();
        assert_ne!(a, b);
        assert!(w != 0.0);
    }

    #[test]
    fn out_of_range_targets_fail() {
        let schema = Schema::lacquering();
        assert!(synth_generate(&schema, 10, 0.0, 0).is_err());
        assert!(synth_generate(&schema, 10, 1.0, 0).is_err());
        assert!(synth_generate(&schema, 0, 0.5, 0).is_err());
    }
}
