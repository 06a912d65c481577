//! Perceptron fusion over member outputs. Pruning the fuser's input
//! connections drops the corresponding members from the ensemble.

use serde::{Deserialize, Serialize};

use super::{ClassifierPool, EnsembleError, EnsembleModel, Fusion, Provenance, Result, Strategy};
use crate::classifiers::{prune_mlp, train_mlp, LmConfig, MlpModel, PruneConfig, TrainedClassifier};
use crate::data::Samples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FuserInput {
    /// The member's real score.
    Score,
    /// The member's hard class as 0.0 / 1.0.
    Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fuser {
    pub net: MlpModel,
    /// One entry per ensemble member.
    pub inputs: Vec<FuserInput>,
}

impl Fuser {
    pub fn features(&self, members: &[TrainedClassifier], x: &[f64]) -> Vec<f64> {
        members
            .iter()
            .zip(&self.inputs)
            .map(|(m, kind)| match kind {
                FuserInput::Score => m.score(x),
                FuserInput::Class => m.predict(x) as f64,
            })
            .collect()
    }

    pub fn forward(&self, members: &[TrainedClassifier], x: &[f64]) -> f64 {
        self.net.forward(&self.features(members, x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuserConfig {
    /// `None` means `⌈members / 10⌉`.
    pub hidden: Option<usize>,
    pub lm: LmConfig,
    /// `None` keeps every member.
    pub prune: Option<PruneConfig>,
    pub threshold: f64,
}

impl Default for FuserConfig {
    fn default() -> Self {
        FuserConfig {
            hidden: None,
            lm: LmConfig::default(),
            prune: Some(PruneConfig {
                retrain_iters: 5,
                max_candidates: Some(10),
            }),
            threshold: 0.5,
        }
    }
}

fn input_kind(member: &TrainedClassifier) -> FuserInput {
    if member.family().has_native_score() {
        FuserInput::Score
    } else {
        FuserInput::Class
    }
}

fn feature_matrix(members: &[TrainedClassifier], kinds: &[FuserInput], data: &Samples) -> Samples {
    let probe = Fuser {
        net: MlpModel::zeros(members.len(), 1),
        inputs: kinds.to_vec(),
    };
    let x = data.x.iter().map(|row| probe.features(members, row)).collect();
    Samples::new(x, data.y.clone())
}

/// Copy of `net` keeping only the listed input columns.
fn restrict_inputs(net: &MlpModel, keep: &[usize]) -> MlpModel {
    let stride = net.inputs + 1;
    let mut w_hidden = Vec::with_capacity(net.hidden * (keep.len() + 1));
    for j in 0..net.hidden {
        let row = &net.w_hidden[j * stride..(j + 1) * stride];
        w_hidden.extend(keep.iter().map(|&k| row[k]));
        w_hidden.push(row[net.inputs]);
    }
    MlpModel {
        inputs: keep.len(),
        hidden: net.hidden,
        w_hidden,
        w_out: net.w_out.clone(),
        active_inputs: vec![true; keep.len()],
    }
}

/// Trains the fusing perceptron on the members' outputs over `train`, prunes
/// it against `validation`, and returns the ensemble of surviving members.
pub fn train_fuser(
    pool: &ClassifierPool,
    train: &Samples,
    validation: &Samples,
    config: &FuserConfig,
    seed: u64,
) -> Result<EnsembleModel> {
    if pool.is_empty() {
        return Err(EnsembleError::EmptyPool);
    }
    let members = &pool.classifiers;
    let kinds: Vec<FuserInput> = members.iter().map(input_kind).collect();
    let tr = feature_matrix(members, &kinds, train);
    let va = feature_matrix(members, &kinds, validation);
    let hidden = config.hidden.unwrap_or(members.len().div_ceil(10)).max(1);
    let (mut net, _) = train_mlp(&tr, hidden, seed, &config.lm)?;
    if let Some(prune) = &config.prune {
        net = prune_mlp(&net, &tr, &va, &config.lm, prune)?;
    }
    let keep: Vec<usize> = (0..net.inputs).filter(|&k| net.active_inputs[k]).collect();
    let fuser = Fuser {
        net: restrict_inputs(&net, &keep),
        inputs: keep.iter().map(|&k| kinds[k]).collect(),
    };
    let kept: Vec<TrainedClassifier> = keep.iter().map(|&k| members[k].clone()).collect();
    let errors = validation
        .x
        .iter()
        .zip(&validation.y)
        .filter(|(x, &y)| u8::from(fuser.forward(&kept, x) >= config.threshold) != y)
        .count();
    Ok(EnsembleModel {
        provenance: Provenance {
            strategy: Strategy::Pruning,
            seeds: kept.iter().map(|m| m.seed).collect(),
            pool_indices: keep,
            validation_errors: errors,
            validation_rows: validation.len(),
            validation_error: errors as f64 / validation.len().max(1) as f64,
            mixed_mean: false,
            trace: Vec::new(),
            fuser_seed: Some(seed),
        },
        members: kept,
        fusion: Fusion::Trained,
        threshold: config.threshold,
        fuser: Some(fuser),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::tree::{Node, TreeModel};
    use crate::classifiers::Model;

    /// Tree that predicts class 1 iff `x[feature] > 0.5`.
    fn column_stump(feature: usize, width: usize) -> TrainedClassifier {
        TrainedClassifier::new(
            Model::Tree(TreeModel {
                nodes: vec![
                    Node::Split {
                        feature,
                        threshold: 0.5,
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
                width,
            }),
            feature as u64,
        )
    }

    /// Columns are the two members' votes. Each member raises false alarms
    /// on a separate set of rows, so the pair is never wrong together.
    fn complementary(n: usize) -> Samples {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let (a, b, t) = match i % 4 {
                0 => (1.0, 1.0, 1),
                1 => (1.0, 0.0, 0),
                2 => (0.0, 1.0, 0),
                _ => (0.0, 0.0, 0),
            };
            x.push(vec![a, b]);
            y.push(t);
        }
        Samples::new(x, y)
    }

    #[test]
    fn complementary_members_are_fused_exactly() {
        let data = complementary(40);
        let pool =
            ClassifierPool::from_classifiers(vec![column_stump(0, 2), column_stump(1, 2)], &data)
                .unwrap();
        let min_member = pool.error_rates().into_iter().fold(1.0, f64::min);
        let best = (0..5)
            .map(|seed| {
                train_fuser(&pool, &data, &data, &FuserConfig::default(), seed)
                    .unwrap()
                    .provenance
                    .validation_error
            })
            .fold(1.0, f64::min);
        assert!(min_member > 0.2);
        assert!(best <= min_member);
        assert_eq!(best, 0.0);
    }

    #[test]
    fn identical_members_match_member_error() {
        // labels follow the stump except on every fifth row, so within each
        // member output the member's class is the majority label
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![((i * 7) % 10) as f64 / 10.0]).collect();
        let y = x
            .iter()
            .enumerate()
            .map(|(i, r)| u8::from(r[0] > 0.5) ^ u8::from(i % 5 == 0))
            .collect();
        let data = Samples::new(x, y);
        let m = column_stump(0, 1);
        let pool = ClassifierPool::from_classifiers(vec![m.clone(), m.clone(), m], &data).unwrap();
        let member = pool.predictions.error_count(0) as i64;
        let e = train_fuser(&pool, &data, &data, &FuserConfig::default(), 2).unwrap();
        assert!((e.provenance.validation_errors as i64 - member).abs() <= 1);
        assert_eq!(e.fuser.as_ref().unwrap().net.inputs, e.members.len());
    }

    #[test]
    fn restricted_net_is_bit_identical() {
        let mut net = crate::classifiers::nw_init(4, 3, 1);
        net.remove_input(1);
        net.remove_input(3);
        let small = restrict_inputs(&net, &[0, 2]);
        for x in [[0.1, 5.0, -0.3, 2.0], [1.0, -1.0, 0.7, 0.2]] {
            assert_eq!(net.forward(&x).to_bits(), small.forward(&[x[0], x[2]]).to_bits());
        }
    }
}
