use serde::{Deserialize, Serialize};

use super::{EnsembleError, Predictions, Result};

/// Agreement table of two classifiers against the truth. Index 1 means
/// correct, 0 wrong; the first digit refers to the first classifier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub n11: usize,
    pub n10: usize,
    pub n01: usize,
    pub n00: usize,
}

impl PairCounts {
    pub fn total(&self) -> usize {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    pub fn double_fault(&self) -> f64 {
        self.n00 as f64 / self.total().max(1) as f64
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(EnsembleError::LengthMismatch { expected, found });
    }
    Ok(())
}

pub fn pair_counts(a: &[u8], b: &[u8], truth: &[u8]) -> Result<PairCounts> {
    check_len(truth.len(), a.len())?;
    check_len(truth.len(), b.len())?;
    let mut c = PairCounts::default();
    for ((&p, &q), &t) in a.iter().zip(b).zip(truth) {
        match (p == t, q == t) {
            (true, true) => c.n11 += 1,
            (true, false) => c.n10 += 1,
            (false, true) => c.n01 += 1,
            (false, false) => c.n00 += 1,
        }
    }
    Ok(c)
}

/// Share of rows misclassified by both classifiers; lower is more diverse.
pub fn double_fault(a: &[u8], b: &[u8], truth: &[u8]) -> Result<f64> {
    if truth.is_empty() {
        return Err(EnsembleError::LengthMismatch {
            expected: 1,
            found: 0,
        });
    }
    Ok(pair_counts(a, b, truth)?.double_fault())
}

/// Double fault between the fused output of an ensemble and one candidate.
pub fn df_to_ensemble(fused: &[u8], member: &[u8], truth: &[u8]) -> Result<f64> {
    double_fault(fused, member, truth)
}

/// Minimum individual validation error and the first member reaching it.
pub fn mie(predictions: &Predictions) -> Result<(f64, usize)> {
    (0..predictions.members())
        .map(|j| (predictions.error_count(j), j))
        .min()
        .map(|(_, j)| (predictions.error_rate(j), j))
        .ok_or(EnsembleError::EmptyPool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityMatrix {
    pub size: usize,
    /// Row-major `size × size`.
    pub counts: Vec<PairCounts>,
}

impl DiversityMatrix {
    pub fn compute(predictions: &Predictions) -> Result<Self> {
        let m = predictions.members();
        if m == 0 {
            return Err(EnsembleError::EmptyPool);
        }
        let mut counts = vec![PairCounts::default(); m * m];
        for i in 0..m {
            for j in i..m {
                let c = pair_counts(
                    &predictions.classes[i],
                    &predictions.classes[j],
                    &predictions.truth,
                )?;
                counts[i * m + j] = c;
                counts[j * m + i] = PairCounts {
                    n10: c.n01,
                    n01: c.n10,
                    ..c
                };
            }
        }
        Ok(DiversityMatrix { size: m, counts })
    }

    pub fn counts(&self, i: usize, j: usize) -> PairCounts {
        self.counts[i * self.size + j]
    }

    pub fn df(&self, i: usize, j: usize) -> f64 {
        self.counts(i, j).double_fault()
    }
}
