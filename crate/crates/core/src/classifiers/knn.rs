//! k-nearest neighbours under the Mahalanobis metric.
//!
//! The inverse covariance `S` is factored as `S = L Lᵀ`; storing the
//! transformed points `Lᵀx` turns every Mahalanobis distance into a plain
//! Euclidean one.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ClassifierError, Result};
use crate::data::{stratified_kfold, Samples};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnConfig {
    pub candidates: Vec<usize>,
    pub cv_folds: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            candidates: vec![1, 3, 5, 7, 9, 11],
            cv_folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub dim: usize,
    /// Regularized inverse covariance, row-major `dim × dim`.
    pub inv_cov: Vec<f64>,
    /// `Lᵀ`, row-major, where `inv_cov = L Lᵀ`.
    pub transform: Vec<f64>,
    /// Training rows mapped through `transform`.
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

/// `sqrt((x − y)ᵀ S (x − y))` for an inverse covariance `S`.
pub fn mahalanobis(x: &[f64], y: &[f64], inv_cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if inv_cov.nrows() != x.len() || inv_cov.ncols() != x.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: x.len(),
            found: inv_cov.nrows(),
        });
    }
    if !is_symmetric(inv_cov) || inv_cov.clone().cholesky().is_none() {
        return Err(ClassifierError::NotPositiveDefinite);
    }
    let d = DVector::from_iterator(x.len(), x.iter().zip(y).map(|(a, b)| a - b));
    Ok(d.dot(&(inv_cov * &d)).max(0.0).sqrt())
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale))
}

/// Population covariance plus `ε·I`, with `ε = 1e-6 · trace / D`.
pub fn regularized_covariance(x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    let d = x[0].len();
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
    let mut cov = centred.tr_mul(&centred) / n as f64;
    let trace = cov.trace();
    let eps = if trace > 0.0 { 1e-6 * trace / d as f64 } else { 1e-6 };
    for i in 0..d {
        cov[(i, i)] += eps;
    }
    cov
}

impl KnnModel {
    /// Stores the training rows under the metric induced by their own
    /// regularized covariance.
    pub fn fit(train: &Samples, k: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        if k == 0 {
            return Err(ClassifierError::InvalidConfig("k must be positive".into()));
        }
        let dim = train.dim();
        let cov = regularized_covariance(&train.x);
        let inv = cov
            .cholesky()
            .ok_or(ClassifierError::NotPositiveDefinite)?
            .inverse();
        let inv = (&inv + inv.transpose()) * 0.5;
        let l = inv
            .clone()
            .cholesky()
            .ok_or(ClassifierError::NotPositiveDefinite)?
            .unpack();
        let lt = l.transpose();
        let transform: Vec<f64> = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| lt[(i, j)])
            .collect();
        let inv_cov: Vec<f64> = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| inv[(i, j)])
            .collect();
        let mut model = KnnModel {
            k: k.min(train.len()),
            dim,
            inv_cov,
            transform,
            points: Vec::new(),
            labels: train.y.clone(),
        };
        model.points = train.x.iter().map(|x| model.whiten(x)).collect();
        Ok(model)
    }

    pub fn input_width(&self) -> usize {
        self.dim
    }

    pub fn inverse_covariance(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.inv_cov)
    }

    fn whiten(&self, x: &[f64]) -> Vec<f64> {
        self.transform
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances keep the lower index.
    pub fn neighbors(&self, x: &[f64], k: usize) -> Vec<usize> {
        let q = self.whiten(x);
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Defect fraction among the `k` nearest neighbours.
    pub fn score(&self, x: &[f64]) -> f64 {
        let nn = self.neighbors(x, self.k);
        nn.iter().filter(|&&i| self.labels[i] == 1).count() as f64 / nn.len() as f64
    }
}

/// Groups identical rows so bootstrap duplicates never straddle folds.
fn duplicate_groups(x: &[Vec<f64>]) -> Vec<usize> {
    let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
    x.iter()
        .map(|row| {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let next = ids.len();
            *ids.entry(key).or_insert(next)
        })
        .collect()
}

/// Picks the candidate k with the lowest internal cross-validation error;
/// ties go to the smaller k.
pub fn select_k(train: &Samples, candidates: &[usize], folds: usize, seed: u64) -> Result<usize> {
    if candidates.is_empty() {
        return Err(ClassifierError::EmptyCandidates);
    }
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() == 1 {
        return Ok(sorted[0]);
    }

    // Folds are assigned to distinct rows; copies follow their original.
    let groups = duplicate_groups(&train.x);
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    let mut group_label = vec![0u8; n_groups];
    for (g, &y) in groups.iter().zip(&train.y) {
        group_label[*g] = group_label[*g].max(y);
    }
    let folds = folds.min(n_groups);
    if folds < 2 {
        for &k in &sorted {
            if k > train.len() {
                return Err(ClassifierError::CandidateTooLarge {
                    k,
                    limit: train.len(),
                });
            }
        }
        return Ok(sorted[0]);
    }
    let assignment = stratified_kfold(&group_label, folds, seed)
        .map_err(|e| ClassifierError::InvalidConfig(e.to_string()))?;
    let fold_of: Vec<usize> = groups.iter().map(|&g| assignment.folds[g]).collect();

    let fold_train: Vec<Vec<usize>> = (0..folds)
        .map(|f| (0..train.len()).filter(|&i| fold_of[i] != f).collect())
        .collect();
    let limit = fold_train.iter().map(Vec::len).min().unwrap_or(0);
    if let Some(&k) = sorted.iter().find(|&&k| k > limit) {
        return Err(ClassifierError::CandidateTooLarge { k, limit });
    }
    let k_max = *sorted.last().unwrap();

    let mut errors = vec![0usize; sorted.len()];
    for (f, train_idx) in fold_train.iter().enumerate() {
        let model = KnnModel::fit(&train.subset(train_idx), k_max)?;
        for i in (0..train.len()).filter(|&i| fold_of[i] == f) {
            let nn = model.neighbors(&train.x[i], k_max);
            let mut defects = 0;
            let mut c = 0;
            for (slot, &k) in sorted.iter().enumerate() {
                while c < k {
                    defects += usize::from(model.labels[nn[c]] == 1);
                    c += 1;
                }
                let predicted = u8::from(2 * defects >= k);
                errors[slot] += usize::from(predicted != train.y[i]);
            }
        }
    }
    let best = (0..sorted.len()).min_by_key(|&s| (errors[s], sorted[s])).unwrap();
    Ok(sorted[best])
}

/// Fits a kNN model, choosing k by internal cross-validation among the
/// configured candidates that the training size admits.
pub fn train_knn(train: &Samples, config: &KnnConfig, seed: u64) -> Result<KnnModel> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if config.candidates.is_empty() {
        return Err(ClassifierError::EmptyCandidates);
    }
    let n = train.len();
    let folds = config.cv_folds.max(2);
    let limit = n - n.div_ceil(folds);
    let mut usable: Vec<usize> = config
        .candidates
        .iter()
        .copied()
        .filter(|&k| k >= 1 && k <= limit.max(1))
        .collect();
    if usable.is_empty() {
        usable.push(*config.candidates.iter().min().unwrap());
    }
    let k = match select_k(train, &usable, folds, seed) {
        Ok(k) => k,
        Err(ClassifierError::CandidateTooLarge { limit, .. }) => {
            // duplicate grouping can shrink partitions below the estimate
            usable.retain(|&k| k <= limit.max(1));
            if usable.is_empty() {
                1
            } else {
                select_k(train, &usable, folds, seed)?
            }
        }
        Err(e) => return Err(e),
    };
    KnnModel::fit(train, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    #[test]
    fn identity_metric_is_euclidean() {
        let id = DMatrix::identity(2, 2);
        assert_eq!(mahalanobis(&[3.0, 4.0], &[0.0, 0.0], &id).unwrap(), 5.0);
        assert_eq!(mahalanobis(&[1.5, -2.0], &[1.5, -2.0], &id).unwrap(), 0.0);
    }

    #[test]
    fn scaled_metric() {
        // Σ = diag(4, 1), so S = diag(1/4, 1)
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.25, 1.0]));
        assert_eq!(mahalanobis(&[2.0, 0.0], &[0.0, 0.0], &s).unwrap(), 1.0);
    }

    #[test]
    fn non_spd_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            mahalanobis(&[1.0, 0.0], &[0.0, 0.0], &m),
            Err(ClassifierError::NotPositiveDefinite)
        );
        assert!(mahalanobis(&[1.0], &[0.0, 0.0], &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn select_k_trivial_cases() {
        let one = Samples::new(vec![vec![0.0]], vec![1]);
        assert_eq!(select_k(&one, &[1], 5, 0).unwrap(), 1);
        let mut rng = rng_from(0);
        let x: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random::<f64>()]).collect();
        let y = (0..30).map(|i| (i % 2) as u8).collect();
        assert_eq!(select_k(&Samples::new(x, y), &[3], 5, 0).unwrap(), 3);
        assert_eq!(select_k(&one, &[], 5, 0), Err(ClassifierError::EmptyCandidates));
    }

    #[test]
    fn select_k_separated_clusters_prefers_one() {
        // Exhaustive check: with well-separated noiseless clusters every
        // candidate scores zero CV error, so the smallest k wins.
        let mut rng = rng_from(2);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let c = if i % 2 == 0 { -10.0 } else { 10.0 };
            x.push(vec![c + rng.random_range(-0.5..0.5), c + rng.random_range(-0.5..0.5)]);
            y.push((i % 2) as u8);
        }
        assert_eq!(select_k(&Samples::new(x, y), &[5, 3, 1], 5, 1).unwrap(), 1);
    }

    #[test]
    fn query_on_training_row_returns_its_label() {
        let s = Samples::new(
            vec![vec![0.0, 0.0], vec![1.0, 3.0], vec![4.0, -1.0], vec![2.0, 2.0]],
            vec![0, 1, 0, 1],
        );
        let m = KnnModel::fit(&s, 1).unwrap();
        for (x, &y) in s.x.iter().zip(&s.y) {
            assert_eq!(m.score(x), y as f64);
        }
    }

    #[test]
    fn three_neighbour_vote_fraction() {
        let s = Samples::new(
            vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0], vec![6.0]],
            vec![1, 1, 0, 0, 0],
        );
        let m = KnnModel::fit(&s, 3).unwrap();
        let score = m.score(&[0.05]);
        assert!((score - 2.0 / 3.0).abs() < 1e-15);
        assert!(score >= 0.5);
    }

    #[test]
    fn neighbours_match_brute_force() {
        let mut rng = rng_from(11);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                let a: f64 = rng.random_range(-2.0..2.0);
                vec![a, 0.5 * a + rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)]
            })
            .collect();
        let y = (0..50).map(|i| (i % 3 == 0) as u8).collect();
        let s = Samples::new(x, y);
        let m = KnnModel::fit(&s, 5).unwrap();
        let inv = m.inverse_covariance();
        for _ in 0..50 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut brute: Vec<(f64, usize)> = s
                .x
                .iter()
                .enumerate()
                .map(|(i, p)| (mahalanobis(&q, p, &inv).unwrap(), i))
                .collect();
            brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expected: Vec<usize> = brute[..5].iter().map(|p| p.1).collect();
            assert_eq!(m.neighbors(&q, 5), expected);
        }
    }

    #[test]
    fn rank_deficient_training_data_is_regularized() {
        // one-hot block: columns sum to one, covariance is singular
        let x = vec![
            vec![1.0, 0.0, 0.3],
            vec![0.0, 1.0, -0.2],
            vec![1.0, 0.0, 0.9],
            vec![0.0, 1.0, 0.1],
        ];
        let m = KnnModel::fit(&Samples::new(x, vec![0, 1, 0, 1]), 1).unwrap();
        assert!(m.inverse_covariance().cholesky().is_some());
        assert_eq!(m.score(&[0.0, 1.0, -0.2]), 1.0);
    }

    #[test]
    fn train_knn_picks_an_odd_default_candidate() {
        let mut rng = rng_from(5);
        let x: Vec<Vec<f64>> = (0..120)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let y = x.iter().map(|r| u8::from(r[0] + r[1] > 0.0)).collect();
        let m = train_knn(&Samples::new(x, y), &KnnConfig::default(), 0).unwrap();
        assert!(KnnConfig::default().candidates.contains(&m.k));
        assert_eq!(m.k % 2, 1);
    }
}
