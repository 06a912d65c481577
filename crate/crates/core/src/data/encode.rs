use serde::{Deserialize, Serialize};

use super::{DataError, FactorKind, Result, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

/// Z-scores continuous factors and one-hot encodes discrete factors, in
/// schema order. Statistics are captured once and travel with every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub schema: Schema,
    /// One entry per factor; `None` for discrete factors.
    pub stats: Vec<Option<ColumnStats>>,
}

impl Encoder {
    pub fn fit(schema: &Schema, raw: &[Vec<f64>]) -> Result<Self> {
        if raw.is_empty() {
            return Err(DataError::Empty);
        }
        let n = raw.len() as f64;
        let mut stats = Vec::with_capacity(schema.factors.len());
        for (j, f) in schema.factors.iter().enumerate() {
            match f.kind {
                FactorKind::Continuous { .. } => {
                    let mean = raw.iter().map(|r| r[j]).sum::<f64>() / n;
                    let var = raw.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                    let std = var.sqrt();
                    if std == 0.0 {
                        log::warn!("factor {} has zero variance; it will encode as 0", f.name);
                    }
                    stats.push(Some(ColumnStats { mean, std }));
                }
                FactorKind::Discrete { .. } => stats.push(None),
            }
        }
        Ok(Encoder {
            schema: schema.clone(),
            stats,
        })
    }

    pub fn width(&self) -> usize {
        self.schema.encoded_width()
    }

    /// Indices of continuous factors whose training spread was zero.
    pub fn zero_variance_factors(&self) -> Vec<usize> {
        self.stats
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.filter(|s| s.std == 0.0).map(|_| i))
            .collect()
    }

    pub fn encode(&self, row: &[f64]) -> Result<Vec<f64>> {
        let factors = &self.schema.factors;
        if row.len() != factors.len() {
            return Err(DataError::RowWidth {
                expected: factors.len(),
                found: row.len(),
            });
        }
        let mut out = Vec::with_capacity(self.width());
        for ((f, stat), &v) in factors.iter().zip(&self.stats).zip(row) {
            match &f.kind {
                FactorKind::Continuous { .. } => {
                    let s = stat.expect("continuous factor without statistics");
                    out.push(if s.std > 0.0 { (v - s.mean) / s.std } else { 0.0 });
                }
                FactorKind::Discrete { states } => {
                    let hot = f.state_index(v).ok_or(DataError::UnknownState {
                        factor: f.name.clone(),
                        value: v,
                    })?;
                    out.extend((0..states.len()).map(|i| if i == hot { 1.0 } else { 0.0 }));
                }
            }
        }
        Ok(out)
    }
}
