use serde::{Deserialize, Serialize};

use super::{
    fuse_vote, ClassifierPool, EnsembleError, Fuser, Fusion, Result, SelectConfig, Selection,
    TraceStep,
};
use crate::classifiers::{ClassifierError, TrainedClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Accuracy,
    Sad,
    /// Members chosen by input pruning of a trained fuser.
    Pruning,
    /// Built directly from a given member list.
    Manual,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Accuracy => "accuracy",
            Strategy::Sad => "sad",
            Strategy::Pruning => "pruning",
            Strategy::Manual => "manual",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    /// Positions of the members in the pool they were selected from.
    pub pool_indices: Vec<usize>,
    pub seeds: Vec<u64>,
    pub validation_errors: usize,
    pub validation_rows: usize,
    pub validation_error: f64,
    /// Mean fusion over members without native scores.
    pub mixed_mean: bool,
    pub trace: Vec<TraceStep>,
    pub fuser_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<TrainedClassifier>,
    pub fusion: Fusion,
    pub threshold: f64,
    pub fuser: Option<Fuser>,
    pub provenance: Provenance,
}

impl EnsembleModel {
    pub(crate) fn from_selection(
        pool: &ClassifierPool,
        selection: &Selection,
        config: &SelectConfig,
        strategy: Strategy,
        mixed_mean: bool,
    ) -> Self {
        let members: Vec<TrainedClassifier> = selection
            .members
            .iter()
            .map(|&j| pool.classifiers[j].clone())
            .collect();
        let mixed = mixed_mean
            && selection
                .members
                .iter()
                .any(|&j| !pool.predictions.native_score[j]);
        EnsembleModel {
            provenance: Provenance {
                strategy,
                pool_indices: selection.members.clone(),
                seeds: members.iter().map(|m| m.seed).collect(),
                validation_errors: selection.errors,
                validation_rows: selection.rows,
                validation_error: selection.error_rate(),
                mixed_mean: mixed,
                trace: selection.trace.clone(),
                fuser_seed: None,
            },
            members,
            fusion: config.fusion,
            threshold: config.threshold,
            fuser: None,
        }
    }

    /// An unselected ensemble over the given members.
    pub fn manual(members: Vec<TrainedClassifier>, fusion: Fusion, threshold: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(EnsembleError::EmptyPool);
        }
        if fusion == Fusion::Trained {
            return Err(EnsembleError::InvalidFusion(fusion));
        }
        let mixed = fusion == Fusion::Mean && members.iter().any(|m| !m.family().has_native_score());
        Ok(EnsembleModel {
            provenance: Provenance {
                strategy: Strategy::Manual,
                pool_indices: (0..members.len()).collect(),
                seeds: members.iter().map(|m| m.seed).collect(),
                validation_errors: 0,
                validation_rows: 0,
                validation_error: 0.0,
                mixed_mean: mixed,
                trace: Vec::new(),
                fuser_seed: None,
            },
            members,
            fusion,
            threshold,
            fuser: None,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.members[0].model.input_width()
    }

    /// `(class, risk)`; risk is the defect-vote share, the mean score or the
    /// fuser output depending on the fusion scheme.
    pub fn predict(&self, x: &[f64]) -> Result<(u8, f64)> {
        let expected = self.input_width();
        if x.len() != expected {
            return Err(EnsembleError::Classifier(ClassifierError::DimensionMismatch {
                expected,
                found: x.len(),
            }));
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> (u8, f64) {
        let m = self.members.len() as f64;
        match (self.fusion, &self.fuser) {
            (Fusion::Trained, Some(fuser)) => {
                let risk = fuser.forward(&self.members, x);
                (u8::from(risk >= self.threshold), risk)
            }
            (Fusion::Mean, _) => {
                let mut sum = 0.0;
                for member in &self.members {
                    sum += member.score(x);
                }
                let mean = sum / m;
                (u8::from(mean >= self.threshold), mean)
            }
            _ => {
                let classes: Vec<u8> = self.members.iter().map(|c| c.predict(x)).collect();
                let ones = classes.iter().filter(|&&c| c == 1).count();
                (fuse_vote(&classes), ones as f64 / m)
            }
        }
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<(u8, f64)>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

pub fn ensemble_predict(ensemble: &EnsembleModel, x: &[f64]) -> Result<(u8, f64)> {
    ensemble.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::tree::{Node, TreeModel};
    use crate::classifiers::Model;

    /// Tree that predicts class 1 iff `x[0] > cut`.
    fn stump(cut: f64) -> TrainedClassifier {
        TrainedClassifier::new(
            Model::Tree(TreeModel {
                nodes: vec![
                    Node::Split {
                        feature: 0,
                        threshold: cut,
                        left: 1,
                        right: 2,
                    },
                    Node::Leaf {
                        class: 0,
                        score: 0.0,
                        size: 1,
                    },
                    Node::Leaf {
                        class: 1,
                        score: 1.0,
                        size: 1,
                    },
                ],
                width: 1,
            }),
            0,
        )
    }

    #[test]
    fn forty_percent_vote() {
        let members: Vec<TrainedClassifier> = [0.0, 1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&c| stump(c))
            .collect();
        let e = EnsembleModel::manual(members, Fusion::Vote, 0.5).unwrap();
        // x = 1.5 exceeds cuts 0 and 1 only
        assert_eq!(e.predict(&[1.5]).unwrap(), (0, 0.4));
        assert_eq!(e.predict(&[9.0]).unwrap(), (1, 1.0));
    }

    #[test]
    fn single_member_matches_member() {
        let m = stump(0.3);
        let e = EnsembleModel::manual(vec![m.clone()], Fusion::Vote, 0.5).unwrap();
        for x in [-1.0, 0.3, 0.31, 2.0] {
            let (c, r) = e.predict(&[x]).unwrap();
            assert_eq!(c, m.predict(&[x]));
            assert_eq!(r, m.score(&[x]));
        }
    }

    #[test]
    fn width_is_checked() {
        let e = EnsembleModel::manual(vec![stump(0.0)], Fusion::Vote, 0.5).unwrap();
        assert!(e.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn mixed_mean_is_flagged() {
        let e = EnsembleModel::manual(vec![stump(0.0), stump(1.0)], Fusion::Mean, 0.5).unwrap();
        assert!(e.provenance.mixed_mean);
        assert_eq!(e.predict(&[0.5]).unwrap(), (1, 0.5));
    }
}
