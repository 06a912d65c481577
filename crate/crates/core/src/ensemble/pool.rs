use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnsembleError, Result};
use crate::classifiers::{ClassifierConfig, Family, TrainedClassifier};
use crate::data::{bagging_sample, Samples};
use crate::rng::derive_seed;

/// Validation outputs of every pool member, plus the truth they are judged
/// against. Selection and diversity work on this alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub truth: Vec<u8>,
    /// `members × rows` hard classes.
    pub classes: Vec<Vec<u8>>,
    /// `members × rows` real scores.
    pub scores: Vec<Vec<f64>>,
    /// Whether each member's score is a native real output (MLP/SVM).
    pub native_score: Vec<bool>,
}

impl Predictions {
    pub fn new(
        truth: Vec<u8>,
        classes: Vec<Vec<u8>>,
        scores: Vec<Vec<f64>>,
        native_score: Vec<bool>,
    ) -> Result<Self> {
        let m = classes.len();
        for (expected, found) in [(m, scores.len()), (m, native_score.len())] {
            if expected != found {
                return Err(EnsembleError::LengthMismatch { expected, found });
            }
        }
        for row in classes.iter().map(Vec::len).chain(scores.iter().map(Vec::len)) {
            if row != truth.len() {
                return Err(EnsembleError::LengthMismatch {
                    expected: truth.len(),
                    found: row,
                });
            }
        }
        Ok(Predictions {
            truth,
            classes,
            scores,
            native_score,
        })
    }

    /// Hard-class-only predictions; scores mirror the classes.
    pub fn from_classes(truth: Vec<u8>, classes: Vec<Vec<u8>>) -> Result<Self> {
        let scores = classes
            .iter()
            .map(|c| c.iter().map(|&v| v as f64).collect())
            .collect();
        let native = vec![false; classes.len()];
        Predictions::new(truth, classes, scores, native)
    }

    pub fn members(&self) -> usize {
        self.classes.len()
    }

    pub fn rows(&self) -> usize {
        self.truth.len()
    }

    pub fn error_count(&self, j: usize) -> usize {
        self.classes[j]
            .iter()
            .zip(&self.truth)
            .filter(|(p, t)| p != t)
            .count()
    }

    pub fn error_rate(&self, j: usize) -> f64 {
        self.error_count(j) as f64 / self.rows().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSpec {
    pub families: Vec<Family>,
    /// Members per family.
    pub count: usize,
    pub config: ClassifierConfig,
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec {
            families: Family::ALL.to_vec(),
            count: 100,
            config: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedMember {
    pub family: Family,
    pub replicate: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierPool {
    pub classifiers: Vec<TrainedClassifier>,
    pub predictions: Predictions,
    pub failed: Vec<FailedMember>,
}

fn family_tag(f: Family) -> u64 {
    match f {
        Family::Tree => 1,
        Family::Knn => 2,
        Family::Mlp => 3,
        Family::Svm => 4,
    }
}

impl ClassifierPool {
    /// Wraps already trained classifiers, caching their validation outputs.
    pub fn from_classifiers(classifiers: Vec<TrainedClassifier>, validation: &Samples) -> Result<Self> {
        if classifiers.is_empty() {
            return Err(EnsembleError::EmptyPool);
        }
        let outputs: Vec<(Vec<u8>, Vec<f64>)> = classifiers
            .iter()
            .map(|c| {
                let scores: Vec<f64> = validation.x.iter().map(|x| c.score(x)).collect();
                let classes = scores.iter().map(|&s| u8::from(s >= c.threshold)).collect();
                (classes, scores)
            })
            .collect();
        let native = classifiers.iter().map(|c| c.family().has_native_score()).collect();
        let (classes, scores) = outputs.into_iter().unzip();
        Ok(ClassifierPool {
            predictions: Predictions::new(validation.y.clone(), classes, scores, native)?,
            classifiers,
            failed: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.classifiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classifiers.is_empty()
    }

    pub fn error_rates(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.predictions.error_rate(j)).collect()
    }

    /// Members restricted to one family, keeping pool order.
    pub fn family_subset(&self, family: Family) -> Option<ClassifierPool> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&j| self.classifiers[j].family() == family)
            .collect();
        self.subset(&keep)
    }

    pub fn subset(&self, keep: &[usize]) -> Option<ClassifierPool> {
        if keep.is_empty() {
            return None;
        }
        let p = &self.predictions;
        Some(ClassifierPool {
            classifiers: keep.iter().map(|&j| self.classifiers[j].clone()).collect(),
            predictions: Predictions {
                truth: p.truth.clone(),
                classes: keep.iter().map(|&j| p.classes[j].clone()).collect(),
                scores: keep.iter().map(|&j| p.scores[j].clone()).collect(),
                native_score: keep.iter().map(|&j| p.native_score[j]).collect(),
            },
            failed: Vec::new(),
        })
    }
}

/// Trains `count` members per family. Tree, kNN and SVM members each see
/// their own bootstrap resample of `train`; MLP members see all of `train`
/// and differ by initialization seed. Members train in parallel and are
/// merged in (family, replicate) order.
pub fn generate_pool(
    train: &Samples,
    validation: &Samples,
    spec: &PoolSpec,
    base_seed: u64,
) -> Result<ClassifierPool> {
    if spec.count == 0 || spec.families.is_empty() {
        return Err(EnsembleError::InvalidConfig(
            "pool needs at least one family and a positive count".into(),
        ));
    }
    if train.is_empty() {
        return Err(EnsembleError::Classifier(
            crate::classifiers::ClassifierError::EmptyTrainingSet,
        ));
    }
    let jobs: Vec<(Family, usize)> = spec
        .families
        .iter()
        .flat_map(|&f| (0..spec.count).map(move |r| (f, r)))
        .collect();
    let all: Vec<usize> = (0..train.len()).collect();
    let results: Vec<(Family, usize, u64, std::result::Result<TrainedClassifier, String>)> = jobs
        .par_iter()
        .map(|&(family, r)| {
            let seed = derive_seed(base_seed, &[family_tag(family), r as u64]);
            let outcome = if family == Family::Mlp {
                TrainedClassifier::train(family, train, Some(validation), &spec.config, seed)
                    .map_err(|e| e.to_string())
            } else {
                bagging_sample(&all, derive_seed(seed, &[0xBA6]))
                    .map_err(|e| e.to_string())
                    .and_then(|idx| {
                        let bag = train.subset(&idx);
                        TrainedClassifier::train(family, &bag, Some(validation), &spec.config, seed)
                            .map_err(|e| e.to_string())
                    })
            };
            (family, r, seed, outcome)
        })
        .collect();

    let mut classifiers = Vec::new();
    let mut failed = Vec::new();
    for (family, replicate, seed, outcome) in results {
        match outcome {
            Ok(c) => classifiers.push(c),
            Err(reason) => {
                log::warn!("{family} member {replicate} failed: {reason}");
                failed.push(FailedMember {
                    family,
                    replicate,
                    seed,
                    reason,
                });
            }
        }
    }
    if classifiers.is_empty() {
        let first = failed.first().map(|f| f.reason.clone()).unwrap_or_default();
        return Err(EnsembleError::AllMembersFailed(first));
    }
    let mut pool = ClassifierPool::from_classifiers(classifiers, validation)?;
    pool.failed = failed;
    Ok(pool)
}
