use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{confusion, EvalError, RateReport, Result};
use crate::classifiers::{ClassifierConfig, Family, TrainedClassifier};
use crate::data::{holdout_split, stratified_kfold, Samples};
use crate::ensemble::{
    generate_pool, select_by_accuracy, select_sad, train_fuser, EnsembleModel, FuserConfig,
    PoolSpec, SelectConfig, Strategy,
};
use crate::rng::derive_seed;

/// Share of a training partition kept for fitting when a trainer also
/// needs validation rows (MLP pruning, ensemble selection).
pub const DEFAULT_INNER_FRACTION: f64 = 1202.0 / 2270.0;

fn default_inner() -> f64 {
    DEFAULT_INNER_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainerSpec {
    Single {
        family: Family,
        #[serde(default)]
        config: ClassifierConfig,
        #[serde(default = "default_inner")]
        inner_fraction: f64,
    },
    Constant {
        class: u8,
    },
    Ensemble {
        #[serde(default)]
        pool: PoolSpec,
        /// `accuracy`, `sad` or `pruning` (trained fuser).
        strategy: Strategy,
        #[serde(default)]
        select: SelectConfig,
        #[serde(default)]
        fuser: FuserConfig,
        #[serde(default = "default_inner")]
        inner_fraction: f64,
    },
}

impl TrainerSpec {
    pub fn label(&self) -> String {
        match self {
            TrainerSpec::Single { family, .. } => family.to_string(),
            TrainerSpec::Constant { class } => format!("constant {class}"),
            TrainerSpec::Ensemble { strategy, select, .. } => match strategy {
                Strategy::Pruning => "ensemble pruning/trained".to_string(),
                s => format!("ensemble {s}/{}", select.fusion),
            },
        }
    }
}

enum Predictor {
    Classifier(TrainedClassifier),
    Constant(u8),
    Ensemble(Box<EnsembleModel>),
}

impl Predictor {
    fn predict(&self, x: &[f64]) -> u8 {
        match self {
            Predictor::Classifier(c) => c.predict(x),
            Predictor::Constant(c) => *c,
            Predictor::Ensemble(e) => e.predict(x).map(|(c, _)| c).unwrap_or(0),
        }
    }
}

fn inner_split(data: &Samples, fraction: f64, seed: u64) -> Result<(Samples, Samples)> {
    let plan = holdout_split(data.len(), fraction, seed)?;
    Ok((data.subset(&plan.train), data.subset(&plan.validation)))
}

fn fit(spec: &TrainerSpec, train: &Samples, seed: u64) -> std::result::Result<Predictor, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    match spec {
        TrainerSpec::Constant { class } => Ok(Predictor::Constant(*class)),
        TrainerSpec::Single {
            family,
            config,
            inner_fraction,
        } => {
            let needs_validation = *family == Family::Mlp && config.mlp.prune.is_some();
            let c = if needs_validation {
                let (fit, val) = inner_split(train, *inner_fraction, seed).map_err(|e| err(&e))?;
                TrainedClassifier::train(*family, &fit, Some(&val), config, seed)
            } else {
                TrainedClassifier::train(*family, train, None, config, seed)
            };
            c.map(Predictor::Classifier).map_err(|e| err(&e))
        }
        TrainerSpec::Ensemble {
            pool,
            strategy,
            select,
            fuser,
            inner_fraction,
        } => {
            let (fit, val) = inner_split(train, *inner_fraction, seed).map_err(|e| err(&e))?;
            let p = generate_pool(&fit, &val, pool, seed).map_err(|e| err(&e))?;
            let model = match strategy {
                Strategy::Accuracy => select_by_accuracy(&p, select),
                Strategy::Sad => select_sad(&p, select),
                Strategy::Pruning => train_fuser(&p, &fit, &val, fuser, derive_seed(seed, &[0xF05E])),
                Strategy::Manual => EnsembleModel::manual(p.classifiers.clone(), select.fusion, select.threshold),
            }
            .map_err(|e| err(&e))?;
            Ok(Predictor::Ensemble(Box::new(model)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat {
            mean,
            std,
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub rows: usize,
    pub rates: RateReport,
}

/// Training wall time per fold, in seconds. Hardware dependent, so kept
/// apart from the reproducible part of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub per_fold: Vec<f64>,
    pub stat: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub trainer: String,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub s01: Stat,
    /// Over folds where the rate is defined.
    pub fa: Option<Stat>,
    pub nd: Option<Stat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl CrossValReport {
    pub fn from_folds(trainer: String, k: usize, seed: u64, folds: Vec<FoldResult>, times: Option<Vec<f64>>) -> Self {
        let s01: Vec<f64> = folds.iter().map(|f| f.rates.s01).collect();
        let fa: Vec<f64> = folds.iter().filter_map(|f| f.rates.fa).collect();
        let nd: Vec<f64> = folds.iter().filter_map(|f| f.rates.nd).collect();
        for (name, defined) in [("FA", fa.len()), ("ND", nd.len())] {
            if defined < folds.len() {
                log::warn!(
                    "{name} undefined on {} of {} folds; those folds are left out of its aggregate",
                    folds.len() - defined,
                    folds.len()
                );
            }
        }
        CrossValReport {
            trainer,
            k,
            seed,
            s01: Stat::of(&s01).expect("at least one fold"),
            fa: Stat::of(&fa),
            nd: Stat::of(&nd),
            timing: times.map(|t| Timing {
                stat: Stat::of(&t).expect("at least one fold"),
                per_fold: t,
            }),
            folds,
        }
    }
}

/// Stratified k-fold cross-validation. Each fold's model is trained on the
/// other k − 1 folds with a seed derived from `(seed, fold)`.
pub fn crossval(data: &Samples, trainer: &TrainerSpec, k: usize, seed: u64) -> Result<CrossValReport> {
    let assignment = stratified_kfold(&data.y, k, seed)?;
    let mut folds = Vec::with_capacity(k);
    let mut times = Vec::with_capacity(k);
    for fold in 0..k {
        let train = data.subset(&assignment.training(fold));
        let test = data.subset(&assignment.held_out(fold));
        let start = Instant::now();
        let predictor = fit(trainer, &train, derive_seed(seed, &[fold as u64]))
            .map_err(|reason| EvalError::Fold { fold, reason })?;
        times.push(start.elapsed().as_secs_f64());
        let predictions: Vec<u8> = test.x.iter().map(|x| predictor.predict(x)).collect();
        let rates = confusion(&test.y, &predictions)?.rates();
        folds.push(FoldResult {
            fold,
            rows: test.len(),
            rates,
        });
    }
    Ok(CrossValReport::from_folds(trainer.label(), k, seed, folds, Some(times)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn learnable(n: usize) -> Samples {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i as f64 * 0.618).fract() * 2.0 - 1.0, ((i * 13) % 7) as f64 / 7.0])
            .collect();
        let y = x.iter().map(|r| u8::from(r[0] > 0.6)).collect();
        Samples::new(x, y)
    }

    #[test]
    fn constant_baseline() {
        let data = learnable(100);
        let pos = data.positives() as f64 / data.len() as f64;
        let r = crossval(&data, &TrainerSpec::Constant { class: 0 }, 5, 1).unwrap();
        assert!((r.s01.mean - pos).abs() < 1e-12);
        assert_eq!(r.nd.unwrap().mean, 1.0);
        assert_eq!(r.fa.unwrap().mean, 0.0);
    }

    #[test]
    fn two_folds_beat_majority() {
        let data = learnable(200);
        let majority = data.positives().min(data.len() - data.positives()) as f64 / data.len() as f64;
        let spec = TrainerSpec::Single {
            family: Family::Tree,
            config: ClassifierConfig::default(),
            inner_fraction: DEFAULT_INNER_FRACTION,
        };
        let r = crossval(&data, &spec, 2, 3).unwrap();
        assert!(r.folds.iter().all(|f| f.rates.s01 < majority));
    }

    #[test]
    fn deterministic_apart_from_timing() {
        let data = learnable(90);
        let spec = TrainerSpec::Single {
            family: Family::Knn,
            config: ClassifierConfig::default(),
            inner_fraction: DEFAULT_INNER_FRACTION,
        };
        let mut a = crossval(&data, &spec, 3, 8).unwrap();
        let mut b = crossval(&data, &spec, 3, 8).unwrap();
        assert_eq!(a.timing.take().unwrap().per_fold.len(), 3);
        b.timing = None;
        assert_eq!(a, b);
    }

    #[test]
    fn aggregates_recompute() {
        let data = learnable(120);
        let r = crossval(&data, &TrainerSpec::Constant { class: 1 }, 4, 2).unwrap();
        let v: Vec<f64> = r.folds.iter().map(|f| f.rates.s01).collect();
        assert_eq!(Stat::of(&v).unwrap(), r.s01);
    }

    #[test]
    fn trainer_failure_names_fold() {
        let mut data = learnable(40);
        data.y = vec![0; 40];
        data.y[0] = 1;
        let spec = TrainerSpec::Single {
            family: Family::Svm,
            config: ClassifierConfig::default(),
            inner_fraction: DEFAULT_INNER_FRACTION,
        };
        // the fold holding the lone positive leaves single-class training data
        match crossval(&data, &spec, 4, 0) {
            Err(EvalError::Fold { reason, .. }) => assert!(reason.contains("degenerate")),
            other => panic!("{other:?}"),
        }
    }
}
