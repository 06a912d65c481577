//! The four base classifier families. Every model maps an encoded row to a
//! real score in `[0, 1]`; the hard class is `score >= threshold`.

pub mod knn;
pub mod mlp;
pub mod svm;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Samples;
pub use knn::{mahalanobis, select_k, train_knn, KnnConfig, KnnModel};
pub use mlp::{
    mlp_forward, nw_init, prune_mlp, train_mlp, LmConfig, LmReport, MlpConfig, MlpModel,
    PruneConfig,
};
pub use svm::{rbf_kernel, train_svm, SvmConfig, SvmModel};
pub use tree::{gini_impurity, train_tree, StopRule, TreeModel};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty node")]
    EmptyNode,
    #[error("degenerate labels: training data holds a single class")]
    DegenerateLabels,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error("candidate k = {k} exceeds the smallest cross-validation training partition ({limit})")]
    CandidateTooLarge { k: usize, limit: usize },
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tree,
    Knn,
    Mlp,
    Svm,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Mlp, Family::Tree, Family::Knn, Family::Svm];

    pub fn name(self) -> &'static str {
        match self {
            Family::Tree => "tree",
            Family::Knn => "knn",
            Family::Mlp => "mlp",
            Family::Svm => "svm",
        }
    }

    /// MLP and SVM outputs are genuine real-valued memberships; tree leaf
    /// proportions and kNN vote fractions are coarse proportions.
    pub fn has_native_score(self) -> bool {
        matches!(self, Family::Mlp | Family::Svm)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tree" | "dt" | "cart" => Ok(Family::Tree),
            "knn" => Ok(Family::Knn),
            "mlp" | "nn" => Ok(Family::Mlp),
            "svm" => Ok(Family::Svm),
            other => Err(format!("unknown classifier family {other:?}")),
        }
    }
}

/// Hyperparameters of all four families.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub tree: StopRule,
    pub knn: KnnConfig,
    pub mlp: MlpConfig,
    pub svm: SvmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Tree(TreeModel),
    Knn(KnnModel),
    Mlp(MlpModel),
    Svm(SvmModel),
}

impl Model {
    pub fn family(&self) -> Family {
        match self {
            Model::Tree(_) => Family::Tree,
            Model::Knn(_) => Family::Knn,
            Model::Mlp(_) => Family::Mlp,
            Model::Svm(_) => Family::Svm,
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Model::Tree(m) => m.input_width(),
            Model::Knn(m) => m.input_width(),
            Model::Mlp(m) => m.inputs,
            Model::Svm(m) => m.input_width(),
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            Model::Tree(m) => m.score(x),
            Model::Knn(m) => m.score(x),
            Model::Mlp(m) => m.forward(x),
            Model::Svm(m) => m.score(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub model: Model,
    pub seed: u64,
    pub threshold: f64,
}

impl TrainedClassifier {
    pub fn new(model: Model, seed: u64) -> Self {
        TrainedClassifier {
            model,
            seed,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Trains one classifier of the given family. `validation` is used only
    /// by MLP pruning, when pruning is enabled.
    pub fn train(
        family: Family,
        train: &Samples,
        validation: Option<&Samples>,
        config: &ClassifierConfig,
        seed: u64,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        let model = match family {
            Family::Tree => Model::Tree(train_tree(train, &config.tree)?),
            Family::Knn => Model::Knn(train_knn(train, &config.knn, seed)?),
            Family::Mlp => {
                let hidden = config.mlp.hidden.unwrap_or(train.dim() + 2);
                let (mut net, _) = train_mlp(train, hidden, seed, &config.mlp.lm)?;
                if let (Some(prune), Some(val)) = (&config.mlp.prune, validation) {
                    net = prune_mlp(&net, train, val, &config.mlp.lm, prune)?;
                }
                Model::Mlp(net)
            }
            Family::Svm => {
                let gamma = config.svm.gamma.unwrap_or(1.0 / train.dim().max(1) as f64);
                Model::Svm(train_svm(
                    train,
                    config.svm.c,
                    gamma,
                    config.svm.tolerance,
                    seed,
                )?)
            }
        };
        Ok(TrainedClassifier::new(model, seed))
    }

    pub fn family(&self) -> Family {
        self.model.family()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.model.score(x)
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.score(x) >= self.threshold)
    }

    pub fn check_width(&self, x: &[f64]) -> Result<()> {
        let expected = self.model.input_width();
        if x.len() != expected {
            return Err(ClassifierError::DimensionMismatch {
                expected,
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// Fraction of rows whose hard prediction differs from the label.
pub fn error_rate(predictions: &[u8], labels: &[u8]) -> f64 {
    debug_assert_eq!(predictions.len(), labels.len());
    let wrong = predictions.iter().zip(labels).filter(|(p, l)| p != l).count();
    wrong as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, Schema};
    use crate::rng::rng_from;
    use rand::Rng;

    fn small_config() -> ClassifierConfig {
        let mut c = ClassifierConfig::default();
        c.mlp.hidden = Some(4);
        c.mlp.lm.max_iter = 30;
        c
    }

    #[test]
    fn class_is_score_at_half_for_every_family() {
        let (d, _) = synth_generate(&Schema::lacquering(), 200, 0.3, 5).unwrap();
        let s = d.all_samples();
        let mut rng = rng_from(1);
        for family in Family::ALL {
            let c = TrainedClassifier::train(family, &s, Some(&s), &small_config(), 3).unwrap();
            for _ in 0..200 {
                let x: Vec<f64> = (0..s.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let score = c.score(&x);
                assert!((0.0..=1.0).contains(&score), "{family}: {score}");
                assert_eq!(c.predict(&x), u8::from(score >= 0.5));
            }
        }
    }

    #[test]
    fn training_is_deterministic_per_family() {
        let (d, _) = synth_generate(&Schema::lacquering(), 150, 0.3, 9).unwrap();
        let s = d.all_samples();
        for family in Family::ALL {
            let a = TrainedClassifier::train(family, &s, Some(&s), &small_config(), 4).unwrap();
            let b = TrainedClassifier::train(family, &s, Some(&s), &small_config(), 4).unwrap();
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap(),
                "{family}"
            );
        }
    }

    #[test]
    fn family_parsing() {
        assert_eq!("NN".parse::<Family>().unwrap(), Family::Mlp);
        assert_eq!("cart".parse::<Family>().unwrap(), Family::Tree);
        assert!("forest".parse::<Family>().is_err());
    }
}
