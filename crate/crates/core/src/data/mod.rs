//! Factor schemas, encoded datasets, splitting and resampling.

mod csv_io;
mod encode;
mod split;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_csv, load_schema, save_schema, write_csv};
pub use encode::{ColumnStats, Encoder};
pub use split::{bagging_sample, holdout_split, stratified_kfold, FoldAssignment, SplitPlan};
pub use synth::{synth_generate, GroundTruth};

/// Name of the label column in every CSV file.
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}: non-numeric value {value:?} for continuous factor {factor}")]
    NonNumeric {
        row: usize,
        factor: String,
        value: String,
    },
    #[error("unknown state {value} for discrete factor {factor}")]
    UnknownState { factor: String, value: f64 },
    #[error("row {row}: label must be 0 or 1, found {value:?}")]
    BadLabel { row: usize, value: String },
    #[error("row has {found} values, schema has {expected} factors")]
    RowWidth { expected: usize, found: usize },
    #[error("empty dataset")]
    Empty,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("unsatisfiable defect rate target {0}")]
    UnsatisfiableTarget(f64),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// How a factor is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FactorKind {
    Continuous { bounds: [f64; 2] },
    Discrete { states: Vec<f64> },
}

/// Value used for an uncontrollable factor when building a default operating
/// point from historical data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Mean,
    Median,
    FirstState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FactorKind,
    pub controllable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
}

impl FactorSpec {
    pub fn continuous(name: &str, min: f64, max: f64, controllable: bool) -> Self {
        FactorSpec {
            name: name.to_string(),
            kind: FactorKind::Continuous { bounds: [min, max] },
            controllable,
            reference: None,
        }
    }

    pub fn discrete(name: &str, states: &[f64], controllable: bool) -> Self {
        FactorSpec {
            name: name.to_string(),
            kind: FactorKind::Discrete {
                states: states.to_vec(),
            },
            controllable,
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: Reference) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FactorKind::Continuous { .. })
    }

    /// Number of encoded columns this factor expands to.
    pub fn width(&self) -> usize {
        match &self.kind {
            FactorKind::Continuous { .. } => 1,
            FactorKind::Discrete { states } => states.len(),
        }
    }

    pub fn state_index(&self, value: f64) -> Option<usize> {
        match &self.kind {
            FactorKind::Discrete { states } => states.iter().position(|&s| s == value),
            FactorKind::Continuous { .. } => None,
        }
    }

    /// True when `value` lies within bounds (continuous) or is a state.
    pub fn admits(&self, value: f64) -> bool {
        match &self.kind {
            FactorKind::Continuous { bounds } => value >= bounds[0] && value <= bounds[1],
            FactorKind::Discrete { states } => states.contains(&value),
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            FactorKind::Continuous { bounds } => {
                if !(bounds[0].is_finite() && bounds[1].is_finite() && bounds[0] < bounds[1]) {
                    return Err(DataError::InvalidSchema(format!(
                        "factor {} needs finite bounds with min < max",
                        self.name
                    )));
                }
            }
            FactorKind::Discrete { states } => {
                if states.len() < 2 {
                    return Err(DataError::InvalidSchema(format!(
                        "discrete factor {} needs at least 2 states",
                        self.name
                    )));
                }
                for (i, s) in states.iter().enumerate() {
                    if !s.is_finite() || states[..i].contains(s) {
                        return Err(DataError::InvalidSchema(format!(
                            "discrete factor {} has an invalid or repeated state {s}",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ordered list of factors describing one defect type's inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub factors: Vec<FactorSpec>,
}

impl Schema {
    pub fn new(factors: Vec<FactorSpec>) -> Result<Self> {
        let schema = Schema { factors };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(DataError::InvalidSchema("no factors".into()));
        }
        for (i, f) in self.factors.iter().enumerate() {
            f.validate()?;
            if f.name == LABEL_COLUMN {
                return Err(DataError::InvalidSchema(format!(
                    "factor name {LABEL_COLUMN:?} is reserved"
                )));
            }
            if self.factors[..i].iter().any(|g| g.name == f.name) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate factor name {}",
                    f.name
                )));
            }
        }
        Ok(())
    }

    /// Encoded width: one column per continuous factor plus one per state.
    pub fn encoded_width(&self) -> usize {
        self.factors.iter().map(FactorSpec::width).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn controllable(&self) -> impl Iterator<Item = (usize, &FactorSpec)> {
        self.factors.iter().enumerate().filter(|(_, f)| f.controllable)
    }

    pub fn uncontrollable(&self) -> impl Iterator<Item = (usize, &FactorSpec)> {
        self.factors.iter().enumerate().filter(|(_, f)| !f.controllable)
    }

    /// Eleven-factor lacquering schema: nine continuous factors and two
    /// three-state discrete factors (passes, layers), 15 encoded inputs.
    /// Basis weight, drying time and load factor are the controllable ones.
    pub fn lacquering() -> Self {
        let states = [1.0, 2.0, 3.0];
        Schema {
            factors: vec![
                FactorSpec::continuous("time_per_table", 2.0, 20.0, false),
                FactorSpec::continuous("liters_per_table", 0.5, 5.0, false),
                FactorSpec::continuous("products", 1.0, 60.0, false)
                    .with_reference(Reference::Median),
                FactorSpec::discrete("passes", &states, false),
                FactorSpec::discrete("layers", &states, false),
                FactorSpec::continuous("basis_weight", 60.0, 200.0, true),
                FactorSpec::continuous("drying_time", 60.0, 2400.0, true),
                FactorSpec::continuous("load_factor", 1.0, 10.0, true),
                FactorSpec::continuous("temperature", 12.0, 32.0, false),
                FactorSpec::continuous("pressure", 990.0, 1035.0, false),
                FactorSpec::continuous("humidity", 25.0, 85.0, false),
            ],
        }
    }
}

/// Owned encoded rows with binary labels, the unit every trainer consumes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl Samples {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<u8>) -> Self {
        assert_eq!(x.len(), y.len(), "rows and labels differ in length");
        Samples { x, y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&l| l == 1).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Samples {
        Samples {
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Raw and encoded factor rows with labels. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    raw: Vec<Vec<f64>>,
    encoded: Vec<Vec<f64>>,
    labels: Vec<u8>,
    encoder: Encoder,
}

impl Dataset {
    /// Validates rows against the schema, fits normalization statistics on
    /// all rows and encodes them.
    pub fn new(schema: Schema, raw: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        schema.validate()?;
        if raw.is_empty() {
            return Err(DataError::Empty);
        }
        if raw.len() != labels.len() {
            return Err(DataError::InvalidSplit(format!(
                "{} rows but {} labels",
                raw.len(),
                labels.len()
            )));
        }
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(DataError::BadLabel {
                row,
                value: l.to_string(),
            });
        }
        let encoder = Encoder::fit(&schema, &raw)?;
        let encoded = raw
            .iter()
            .map(|r| encoder.encode(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            schema,
            raw,
            encoded,
            labels,
            encoder,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn raw(&self) -> &[Vec<f64>] {
        &self.raw
    }

    pub fn encoded(&self) -> &[Vec<f64>] {
        &self.encoded
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.schema.encoded_width()
    }

    pub fn defect_rate(&self) -> f64 {
        self.labels.iter().map(|&l| l as f64).sum::<f64>() / self.len() as f64
    }

    pub fn samples(&self, indices: &[usize]) -> Samples {
        Samples {
            x: indices.iter().map(|&i| self.encoded[i].clone()).collect(),
            y: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn all_samples(&self) -> Samples {
        Samples {
            x: self.encoded.clone(),
            y: self.labels.clone(),
        }
    }
}
