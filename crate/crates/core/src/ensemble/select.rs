//! Accuracy-ordered prefix selection and the diversity-driven SAD recursion.

use serde::{Deserialize, Serialize};

use super::{Accumulator, ClassifierPool, EnsembleError, EnsembleModel, Fusion, Predictions, Result, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub fusion: Fusion,
    pub threshold: f64,
    /// Admit tree leaf proportions and kNN vote fractions as scores under
    /// mean fusion. Recorded in provenance when used.
    pub allow_mixed_mean: bool,
    /// SAD seed size: how many of the most accurate members start the
    /// recursion.
    pub sad_initial: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            fusion: Fusion::Vote,
            threshold: 0.5,
            allow_mixed_mean: false,
            sad_initial: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub size: usize,
    /// Pool index of the member added at this step.
    pub added: usize,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Pool indices in insertion order.
    pub members: Vec<usize>,
    pub errors: usize,
    pub rows: usize,
    pub trace: Vec<TraceStep>,
}

impl Selection {
    pub fn error_rate(&self) -> f64 {
        self.errors as f64 / self.rows.max(1) as f64
    }
}

/// Pool indices by ascending validation error, ties by index.
pub fn accuracy_order(predictions: &Predictions) -> Vec<usize> {
    let errors: Vec<usize> = (0..predictions.members())
        .map(|j| predictions.error_count(j))
        .collect();
    let mut order: Vec<usize> = (0..predictions.members()).collect();
    order.sort_by_key(|&j| (errors[j], j));
    order
}

fn check_fusion(fusion: Fusion) -> Result<()> {
    if fusion == Fusion::Trained {
        return Err(EnsembleError::InvalidFusion(fusion));
    }
    Ok(())
}

fn best_of(trace: &[TraceStep]) -> &TraceStep {
    let mut best = &trace[0];
    for step in &trace[1..] {
        if step.errors < best.errors {
            best = step;
        }
    }
    best
}

/// Fuses every accuracy-ordered prefix and keeps the one with fewest
/// validation errors; ties go to the shorter prefix.
pub fn select_accuracy_members(
    predictions: &Predictions,
    fusion: Fusion,
    threshold: f64,
) -> Result<Selection> {
    check_fusion(fusion)?;
    if predictions.members() == 0 {
        return Err(EnsembleError::EmptyPool);
    }
    let order = accuracy_order(predictions);
    let mut acc = Accumulator::new(predictions.rows());
    let mut trace = Vec::with_capacity(order.len());
    for &j in &order {
        acc.add(&predictions.classes[j], &predictions.scores[j]);
        trace.push(TraceStep {
            size: acc.size(),
            added: j,
            errors: acc.errors(fusion, threshold, &predictions.truth),
        });
    }
    let best = best_of(&trace);
    Ok(Selection {
        members: order[..best.size].to_vec(),
        errors: best.errors,
        rows: predictions.rows(),
        trace,
    })
}

/// Seeds the ensemble with the `initial` most accurate members, then
/// repeatedly adds the remaining member with the smallest double fault
/// against the current fused output until the pool is exhausted. The
/// recorded ensemble with fewest validation errors is returned, ties going
/// to the smaller one. Double-fault ties go to the more accurate member.
pub fn select_sad_members(
    predictions: &Predictions,
    fusion: Fusion,
    threshold: f64,
    initial: usize,
) -> Result<Selection> {
    check_fusion(fusion)?;
    if predictions.members() == 0 {
        return Err(EnsembleError::EmptyPool);
    }
    if initial == 0 {
        return Err(EnsembleError::InvalidConfig("SAD initial size must be positive".into()));
    }
    let truth = &predictions.truth;
    let order = accuracy_order(predictions);
    let seed = initial.min(order.len());
    let mut acc = Accumulator::new(predictions.rows());
    for &j in &order[..seed] {
        acc.add(&predictions.classes[j], &predictions.scores[j]);
    }
    let mut members: Vec<usize> = order[..seed].to_vec();
    let mut trace = vec![TraceStep {
        size: seed,
        added: order[seed - 1],
        errors: acc.errors(fusion, threshold, truth),
    }];
    let mut remaining: Vec<usize> = order[seed..].to_vec();
    while !remaining.is_empty() {
        let fused = acc.fused(fusion, threshold);
        let wrong: Vec<bool> = fused.iter().zip(truth).map(|(p, t)| p != t).collect();
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &j)| {
                let n00 = predictions.classes[j]
                    .iter()
                    .zip(truth)
                    .zip(&wrong)
                    .filter(|((p, t), &w)| w && p != t)
                    .count();
                (pos, n00)
            })
            .min_by_key(|&(pos, n00)| (n00, pos))
            .expect("remaining is nonempty");
        let j = remaining.remove(pos);
        acc.add(&predictions.classes[j], &predictions.scores[j]);
        members.push(j);
        trace.push(TraceStep {
            size: acc.size(),
            added: j,
            errors: acc.errors(fusion, threshold, truth),
        });
    }
    let best = best_of(&trace).clone();
    members.truncate(best.size);
    Ok(Selection {
        members,
        errors: best.errors,
        rows: predictions.rows(),
        trace,
    })
}

/// Checks mean-fusion admissibility; returns whether non-native scores
/// were admitted.
fn mean_admission(pool: &ClassifierPool, members: &[usize], config: &SelectConfig) -> Result<bool> {
    if config.fusion != Fusion::Mean {
        return Ok(false);
    }
    let mut mixed = false;
    for &j in members {
        if !pool.predictions.native_score[j] {
            if !config.allow_mixed_mean {
                return Err(EnsembleError::NoRealScore {
                    member: j,
                    family: pool.classifiers[j].family(),
                });
            }
            mixed = true;
        }
    }
    Ok(mixed)
}

fn all_members(pool: &ClassifierPool) -> Vec<usize> {
    (0..pool.len()).collect()
}

pub fn select_by_accuracy(pool: &ClassifierPool, config: &SelectConfig) -> Result<EnsembleModel> {
    let mixed = mean_admission(pool, &all_members(pool), config)?;
    let sel = select_accuracy_members(&pool.predictions, config.fusion, config.threshold)?;
    Ok(EnsembleModel::from_selection(pool, &sel, config, Strategy::Accuracy, mixed))
}

pub fn select_sad(pool: &ClassifierPool, config: &SelectConfig) -> Result<EnsembleModel> {
    let mixed = mean_admission(pool, &all_members(pool), config)?;
    let sel = select_sad_members(&pool.predictions, config.fusion, config.threshold, config.sad_initial)?;
    Ok(EnsembleModel::from_selection(pool, &sel, config, Strategy::Sad, mixed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(truth: &[u8], members: &[&[u8]]) -> Predictions {
        Predictions::from_classes(truth.to_vec(), members.iter().map(|m| m.to_vec()).collect()).unwrap()
    }

    #[test]
    fn single_member() {
        let p = preds(&[1, 0, 1], &[&[1, 1, 1]]);
        let s = select_accuracy_members(&p, Fusion::Vote, 0.5).unwrap();
        assert_eq!(s.members, vec![0]);
        assert_eq!(s.errors, 1);
    }

    #[test]
    fn identical_members_give_prefix_one() {
        let m: &[u8] = &[1, 0, 0, 1, 1];
        let p = preds(&[1, 0, 1, 1, 0], &[m, m, m, m]);
        assert_eq!(select_accuracy_members(&p, Fusion::Vote, 0.5).unwrap().members, vec![0]);
        let sad = select_sad_members(&p, Fusion::Vote, 0.5, 3).unwrap();
        assert_eq!(sad.members, vec![0, 1, 2]);
    }

    #[test]
    fn complementary_trio_beats_noise() {
        // each of the first three errs on a different third; their vote is
        // perfect. The fourth member errs almost everywhere.
        let truth: Vec<u8> = (0..9).map(|i| (i % 2) as u8).collect();
        let mut members: Vec<Vec<u8>> = (0..3)
            .map(|k| {
                truth
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| if i / 3 == k { 1 - t } else { t })
                    .collect()
            })
            .collect();
        let noise: Vec<u8> = truth.iter().enumerate().map(|(i, &t)| if i < 7 { 1 - t } else { t }).collect();
        members.push(noise);
        let p = Predictions::from_classes(truth, members).unwrap();
        let s = select_accuracy_members(&p, Fusion::Vote, 0.5).unwrap();
        assert_eq!(s.members.len(), 3);
        assert_eq!(s.errors, 0);
    }

    #[test]
    fn sad_adds_by_minimum_double_fault() {
        // truth all zeros so a 1 marks an error
        let truth = [0u8; 6];
        let a: &[u8] = &[1, 0, 0, 0, 0, 0];
        let b: &[u8] = &[1, 1, 0, 0, 0, 0];
        let c: &[u8] = &[0, 0, 1, 1, 0, 0];
        let d: &[u8] = &[1, 1, 1, 0, 0, 0];
        let p = preds(&truth, &[d, c, b, a]);
        // errors a 1, c 2, b 2, d 3; c precedes b by pool index
        assert_eq!(accuracy_order(&p), vec![3, 1, 2, 0]);
        let s = select_sad_members(&p, Fusion::Vote, 0.5, 1).unwrap();
        // seed {a} fused = a, errs on row 0. DF(a, b) = 1/6, DF(a, c) = 0,
        // DF(a, d) = 1/6, so c enters. fused {a, c} (tie rule) errs on rows
        // 0, 2, 3; DF with b = 1/6, with d = 2/6: b enters, then d.
        // {a, c, b} errs only on row 0; all four err on rows 0, 1, 2.
        let added: Vec<usize> = s.trace.iter().map(|t| t.added).collect();
        assert_eq!(added, vec![3, 1, 2, 0]);
        let errs: Vec<usize> = s.trace.iter().map(|t| t.errors).collect();
        assert_eq!(errs, vec![1, 3, 1, 3]);
        assert_eq!(s.members, vec![3]);
    }

    #[test]
    fn pool_of_two() {
        let p = preds(&[1, 0], &[&[1, 1], &[0, 0]]);
        let s = select_sad_members(&p, Fusion::Vote, 0.5, 3).unwrap();
        assert_eq!(s.trace.len(), 1);
        assert_eq!(s.trace[0].size, 2);
    }

    #[test]
    fn trained_fusion_is_rejected() {
        let p = preds(&[1], &[&[1]]);
        assert_eq!(
            select_accuracy_members(&p, Fusion::Trained, 0.5).unwrap_err(),
            EnsembleError::InvalidFusion(Fusion::Trained)
        );
    }
}
