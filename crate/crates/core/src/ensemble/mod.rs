//! Classifier pools, double-fault diversity, member selection and fusion.

mod diversity;
mod fuser;
mod fusion;
mod model;
mod pool;
mod select;

use thiserror::Error;

use crate::classifiers::ClassifierError;

pub use diversity::{df_to_ensemble, double_fault, mie, pair_counts, DiversityMatrix, PairCounts};
pub use fuser::{train_fuser, Fuser, FuserConfig, FuserInput};
pub use fusion::{fuse_mean, fuse_vote, vote_share, Accumulator, Fusion};
pub use model::{ensemble_predict, EnsembleModel, Provenance, Strategy};
pub use pool::{generate_pool, ClassifierPool, FailedMember, PoolSpec, Predictions};
pub use select::{
    accuracy_order, select_accuracy_members, select_by_accuracy, select_sad, select_sad_members,
    SelectConfig, Selection, TraceStep,
};

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("empty pool")]
    EmptyPool,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("member {member} ({family}) has no real-valued score; mean fusion needs allow_mixed_mean")]
    NoRealScore {
        member: usize,
        family: crate::classifiers::Family,
    },
    #[error("every pool member failed to train; first failure: {0}")]
    AllMembersFailed(String),
    #[error("fusion {0} is not available here")]
    InvalidFusion(Fusion),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

pub type Result<T> = std::result::Result<T, EnsembleError>;
