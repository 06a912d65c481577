use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Result};
use crate::rng::rng_from;

/// Disjoint train/validation partition of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub seed: u64,
}

/// Random holdout partition with `round(fraction * n)` training rows.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<SplitPlan> {
    if n < 2 {
        return Err(DataError::InvalidSplit(format!("need at least 2 rows, got {n}")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidSplit(format!(
            "fraction {fraction} outside (0, 1)"
        )));
    }
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(DataError::InvalidSplit(format!(
            "fraction {fraction} of {n} rows leaves an empty partition"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from(seed));
    let mut train = perm[..n_train].to_vec();
    let mut validation = perm[n_train..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    Ok(SplitPlan {
        train,
        validation,
        seed,
    })
}

/// Bootstrap resample of the training indices: same size, with replacement.
pub fn bagging_sample(train: &[usize], seed: u64) -> Result<Vec<usize>> {
    if train.is_empty() {
        return Err(DataError::Empty);
    }
    let mut rng = rng_from(seed);
    Ok((0..train.len())
        .map(|_| train[rng.random_range(0..train.len())])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold id of every row.
    pub folds: Vec<usize>,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified k-fold assignment.
///
/// Positives and negatives are shuffled separately, laid end to end, and
/// dealt round-robin onto the folds. Dealing one continuous sequence keeps
/// fold sizes within one of each other while each class is spread as
/// evenly as possible.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = labels.len();
    if k < 2 {
        return Err(DataError::InvalidSplit(format!("k = {k} must be at least 2")));
    }
    if k > n {
        return Err(DataError::InvalidSplit(format!("k = {k} exceeds {n} rows")));
    }
    let mut rng = rng_from(seed);
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| labels[i] != 1).collect();
    if pos.is_empty() || neg.is_empty() {
        log::warn!("single-class labels; stratified k-fold reduces to plain k-fold");
    }
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![0; n];
    for (slot, &row) in pos.iter().chain(neg.iter()).enumerate() {
        folds[row] = slot % k;
    }
    Ok(FoldAssignment { k, folds, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn paper_holdout_sizes() {
        let plan = holdout_split(2270, 1202.0 / 2270.0, 1).unwrap();
        assert_eq!(plan.train.len(), 1202);
        assert_eq!(plan.validation.len(), 1068);
    }

    #[test]
    fn smallest_split() {
        let plan = holdout_split(2, 0.5, 3).unwrap();
        assert_eq!((plan.train.len(), plan.validation.len()), (1, 1));
    }

    #[test]
    fn holdout_is_deterministic() {
        assert_eq!(
            holdout_split(100, 0.3, 9).unwrap(),
            holdout_split(100, 0.3, 9).unwrap()
        );
    }

    #[test]
    fn holdout_rejects_degenerate_inputs() {
        assert!(holdout_split(1, 0.5, 0).is_err());
        assert!(holdout_split(10, 0.0, 0).is_err());
        assert!(holdout_split(10, 1.0, 0).is_err());
        assert!(holdout_split(3, 0.01, 0).is_err());
    }

    #[test]
    fn bagging_single_row() {
        assert_eq!(bagging_sample(&[42], 5).unwrap(), vec![42]);
        assert!(bagging_sample(&[], 5).is_err());
    }

    #[test]
    fn bagging_is_deterministic() {
        let train: Vec<usize> = (0..50).collect();
        assert_eq!(
            bagging_sample(&train, 11).unwrap(),
            bagging_sample(&train, 11).unwrap()
        );
    }

    #[test]
    fn bagging_unique_fraction_near_one_minus_inverse_e() {
        // Monte-Carlo reference: the expected unique fraction of a size-n
        // bootstrap is 1 - (1 - 1/n)^n, about 0.632 for n = 10 000.
        let n = 10_000;
        let train: Vec<usize> = (0..n).collect();
        let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
        let mut total = 0.0;
        for seed in 0..20 {
            let s = bagging_sample(&train, seed).unwrap();
            let frac = s.iter().collect::<HashSet<_>>().len() as f64 / n as f64;
            assert!((frac - 0.632).abs() < 0.02, "seed {seed}: {frac}");
            total += frac;
        }
        assert!((total / 20.0 - expected).abs() < 0.003);
    }

    #[test]
    fn stratified_hundred_rows() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 8 == 0 && i < 96)).collect();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 12);
        let fa = stratified_kfold(&labels, 10, 4).unwrap();
        for f in 0..10 {
            let rows = fa.held_out(f);
            assert_eq!(rows.len(), 10);
            let p = rows.iter().filter(|&&i| labels[i] == 1).count();
            assert!(p == 1 || p == 2, "fold {f} has {p} positives");
        }
    }

    #[test]
    fn k_equal_n_is_leave_one_out() {
        let labels = [0, 1, 0, 1, 1, 0, 0];
        let fa = stratified_kfold(&labels, 7, 0).unwrap();
        assert_eq!(fa.fold_sizes(), vec![1; 7]);
    }

    #[test]
    fn k_above_n_is_rejected() {
        assert!(stratified_kfold(&[0; 10], 11, 0).is_err());
        assert!(stratified_kfold(&[0, 1], 1, 0).is_err());
    }

    #[test]
    fn single_class_falls_back_to_plain_kfold() {
        let fa = stratified_kfold(&[0; 9], 3, 1).unwrap();
        assert_eq!(fa.fold_sizes(), vec![3, 3, 3]);
    }

    proptest! {
        #[test]
        fn holdout_partitions_all_rows(n in 2usize..500, frac in 0.05f64..0.95, seed: u64) {
            if let Ok(plan) = holdout_split(n, frac, seed) {
                let mut all: Vec<usize> = plan.train.iter().chain(&plan.validation).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert_eq!(plan.train.len(), (frac * n as f64).round() as usize);
            }
        }

        #[test]
        fn bagging_draws_from_train(train in proptest::collection::vec(0usize..1000, 1..200), seed: u64) {
            let s = bagging_sample(&train, seed).unwrap();
            prop_assert_eq!(s.len(), train.len());
            prop_assert!(s.iter().all(|i| train.contains(i)));
        }

        #[test]
        fn folds_are_balanced_and_stratified(
            labels in proptest::collection::vec(0u8..2, 2..400),
            k in 2usize..12,
            seed: u64,
        ) {
            prop_assume!(k <= labels.len());
            let fa = stratified_kfold(&labels, k, seed).unwrap();
            let sizes = fa.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let n = labels.len() as f64;
            let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
            for f in 0..k {
                let rows = fa.held_out(f);
                let p = rows.iter().filter(|&&i| labels[i] == 1).count() as f64;
                let target = n_pos * rows.len() as f64 / n;
                prop_assert!((p - target).abs() <= 1.0 + 1e-12, "fold {} has {} vs {}", f, p, target);
            }
        }
    }
}
