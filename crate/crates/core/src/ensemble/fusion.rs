use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// Majority vote on hard classes; an exact tie goes to defect.
    Vote,
    /// Mean of real scores against the threshold.
    Mean,
    /// Perceptron fed with member outputs.
    Trained,
}

impl Fusion {
    pub fn name(self) -> &'static str {
        match self {
            Fusion::Vote => "vote",
            Fusion::Mean => "mean",
            Fusion::Trained => "trained",
        }
    }
}

impl std::fmt::Display for Fusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Fusion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vote" | "majority" => Ok(Fusion::Vote),
            "mean" | "average" => Ok(Fusion::Mean),
            "trained" | "fuser" | "nn" | "mlp" => Ok(Fusion::Trained),
            other => Err(format!("unknown fusion scheme {other:?}")),
        }
    }
}

/// Class 1 wins ties.
pub fn fuse_vote(classes: &[u8]) -> u8 {
    let ones = classes.iter().filter(|&&c| c == 1).count();
    u8::from(2 * ones >= classes.len() && !classes.is_empty())
}

/// Fraction of members voting defect.
pub fn vote_share(classes: &[u8]) -> f64 {
    let ones = classes.iter().filter(|&&c| c == 1).count();
    ones as f64 / classes.len().max(1) as f64
}

pub fn fuse_mean(scores: &[f64], threshold: f64) -> (f64, u8) {
    let mean = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
    (mean, u8::from(mean >= threshold))
}

/// Running per-row vote counts and score sums of a growing member set.
/// Members are summed in insertion order, which is also the order an
/// [`EnsembleModel`](super::EnsembleModel) sums them at prediction time, so
/// fused decisions agree bit for bit.
#[derive(Debug, Clone)]
pub struct Accumulator {
    votes: Vec<u32>,
    sums: Vec<f64>,
    size: usize,
}

impl Accumulator {
    pub fn new(rows: usize) -> Self {
        Accumulator {
            votes: vec![0; rows],
            sums: vec![0.0; rows],
            size: 0,
        }
    }

    pub fn add(&mut self, classes: &[u8], scores: &[f64]) {
        for (v, &c) in self.votes.iter_mut().zip(classes) {
            *v += u32::from(c);
        }
        for (s, &x) in self.sums.iter_mut().zip(scores) {
            *s += x;
        }
        self.size += 1;
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn fused(&self, fusion: Fusion, threshold: f64) -> Vec<u8> {
        let m = self.size;
        match fusion {
            Fusion::Mean => self
                .sums
                .iter()
                .map(|s| u8::from(s / m as f64 >= threshold))
                .collect(),
            _ => self
                .votes
                .iter()
                .map(|&v| u8::from(m > 0 && 2 * v as usize >= m))
                .collect(),
        }
    }

    pub fn errors(&self, fusion: Fusion, threshold: f64, truth: &[u8]) -> usize {
        self.fused(fusion, threshold)
            .iter()
            .zip(truth)
            .filter(|(p, t)| p != t)
            .count()
    }
}
