//! Comparison criteria and validation protocols.

mod crossval;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crossval::{
    crossval, CrossValReport, FoldResult, Stat, Timing, TrainerSpec, DEFAULT_INNER_FRACTION,
};
pub use table::{confusion_table, crossval_table, percent, rates_table};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("non-binary value {value} at row {index}")]
    NonBinary { index: usize, value: u8 },
    #[error("identical disagreement profile: the classifiers never disagree on correctness")]
    IdenticalDisagreement,
    #[error("fold {fold}: {reason}")]
    Fold { fold: usize, reason: String },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Positive class is defect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn rates(&self) -> RateReport {
        rates(self)
    }
}

fn check_pair(truth: &[u8], predictions: &[u8]) -> Result<()> {
    if truth.len() != predictions.len() {
        return Err(EvalError::LengthMismatch {
            expected: truth.len(),
            found: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    for (index, &value) in truth.iter().chain(predictions).enumerate() {
        if value > 1 {
            return Err(EvalError::NonBinary {
                index: index % truth.len(),
                value,
            });
        }
    }
    Ok(())
}

pub fn confusion(truth: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix> {
    check_pair(truth, predictions)?;
    let mut m = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predictions) {
        match (t, p) {
            (1, 1) => m.tp += 1,
            (1, _) => m.fn_ += 1,
            (_, 1) => m.fp += 1,
            _ => m.tn += 1,
        }
    }
    Ok(m)
}

/// Misclassification, false alarm and non-detection rates. FA is `None`
/// without negatives and ND is `None` without positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub s01: f64,
    pub fa: Option<f64>,
    pub nd: Option<f64>,
    pub confusion: ConfusionMatrix,
}

pub fn rates(m: &ConfusionMatrix) -> RateReport {
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    RateReport {
        s01: ratio(m.fn_ + m.fp, m.total()).unwrap_or(0.0),
        fa: ratio(m.fp, m.fp + m.tn),
        nd: ratio(m.fn_, m.fn_ + m.tp),
        confusion: *m,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// Rows the first classifier gets right and the second wrong.
    pub n10: usize,
    pub n01: usize,
    pub u: f64,
    /// `u > 1.96`: the two error rates differ at the 5% level.
    pub reject: bool,
}

pub const MCNEMAR_CRITICAL: f64 = 1.96;

pub fn mcnemar_u(truth: &[u8], best: &[u8], other: &[u8]) -> Result<McNemar> {
    check_pair(truth, best)?;
    check_pair(truth, other)?;
    let (mut n10, mut n01) = (0usize, 0usize);
    for ((&t, &a), &b) in truth.iter().zip(best).zip(other) {
        match (a == t, b == t) {
            (true, false) => n10 += 1,
            (false, true) => n01 += 1,
            _ => {}
        }
    }
    if n10 + n01 == 0 {
        return Err(EvalError::IdenticalDisagreement);
    }
    let u = n10.abs_diff(n01) as f64 / ((n10 + n01) as f64).sqrt();
    Ok(McNemar {
        n10,
        n01,
        u,
        reject: u > MCNEMAR_CRITICAL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let t = [1, 0, 1, 1, 0];
        let m = confusion(&t, &t).unwrap();
        assert_eq!((m.fn_, m.fp), (0, 0));
        let r = rates(&m);
        assert_eq!((r.s01, r.fa, r.nd), (0.0, Some(0.0), Some(0.0)));
    }

    #[test]
    fn five_rows_by_hand() {
        // truth 1 1 0 0 1, pred 1 0 1 0 0 → TP 1, FN 2, FP 1, TN 1
        let m = confusion(&[1, 1, 0, 0, 1], &[1, 0, 1, 0, 0]).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix {
                tp: 1,
                fn_: 2,
                fp: 1,
                tn: 1
            }
        );
    }

    #[test]
    fn undefined_rates_are_flagged() {
        let r = rates(&confusion(&[0, 0, 0], &[0, 1, 0]).unwrap());
        assert_eq!(r.nd, None);
        assert_eq!(r.fa, Some(1.0 / 3.0));
        let r = rates(&confusion(&[1, 1], &[1, 0]).unwrap());
        assert_eq!(r.fa, None);
    }

    #[test]
    fn input_validation() {
        assert!(matches!(confusion(&[1, 0], &[1]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(confusion(&[1, 2], &[1, 0]), Err(EvalError::NonBinary { index: 1, value: 2 })));
        assert!(matches!(confusion(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn mcnemar_examples() {
        // 20 rows only the first gets right, 5 only the second
        let mut truth = vec![1u8; 30];
        truth[29] = 0;
        let mut a = truth.clone();
        let mut b = truth.clone();
        for i in 0..20 {
            b[i] = 1 - truth[i];
        }
        for i in 20..25 {
            a[i] = 1 - truth[i];
        }
        let m = mcnemar_u(&truth, &a, &b).unwrap();
        assert_eq!((m.n10, m.n01), (20, 5));
        assert_eq!(m.u, 3.0);
        assert!(m.reject);
        let swapped = mcnemar_u(&truth, &b, &a).unwrap();
        assert_eq!(swapped.u, m.u);
        assert!(matches!(
            mcnemar_u(&truth, &a, &a),
            Err(EvalError::IdenticalDisagreement)
        ));
    }
}
