//! Classifier ensembles for proactive quality monitoring.
//!
//! The crate trains pools of four classifier families (CART trees,
//! Mahalanobis kNN, robust Levenberg-Marquardt MLPs and SMO-trained RBF
//! SVMs) on factor/defect data, selects and fuses ensemble members, scores
//! them with holdout and cross-validation statistics, and uses a fitted
//! ensemble as a surrogate for full-factorial experiments over the
//! controllable process factors.

pub mod classifiers;
pub mod data;
pub mod doe;
pub mod ensemble;
pub mod eval;
pub mod rng;
pub mod store;


pub use classifiers::{Family, TrainedClassifier};
pub use ensemble::{ClassifierPool, EnsembleModel, Fusion};
pub use data::{Dataset, FactorKind, FactorSpec, Samples, Schema};

