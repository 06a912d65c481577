//! File-based model store: one JSON file per defect-type model plus an
//! `index.json` listing ids, files and SHA-256 checksums of the payloads.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{Encoder, Schema};
use crate::doe::OperatingPoint;
use crate::ensemble::{EnsembleModel, Fusion};

pub const FORMAT_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unsupported version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("corrupt payload for model {id:?}: {reason}")]
    Corrupt { id: String, reason: String },
    #[error("unknown model id {0:?}")]
    UnknownId(String),
    #[error("invalid model id {0:?}")]
    InvalidId(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    /// Master seed of the run that produced the model.
    pub seed: u64,
    /// Named sub-seeds, for example the pool and fuser seeds.
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of the canonical JSON of the configuration used.
    pub config_digest: String,
    /// Number of training rows.
    pub training_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub format_version: u32,
    pub defect: String,
    pub schema: Schema,
    /// Normalization statistics for raw rows.
    pub encoder: Encoder,
    pub ensemble: EnsembleModel,
    /// Default values for the uncontrollable factors.
    pub reference: OperatingPoint,
    pub metadata: RecordMetadata,
}

impl ModelRecord {
    pub fn new(
        defect: &str,
        encoder: Encoder,
        ensemble: EnsembleModel,
        reference: OperatingPoint,
        metadata: RecordMetadata,
    ) -> Self {
        ModelRecord {
            format_version: FORMAT_VERSION,
            defect: defect.to_string(),
            schema: encoder.schema.clone(),
            encoder,
            ensemble,
            reference,
            metadata,
        }
    }

    /// Canonical serialization: equal records give equal bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// `(class, risk)` for a natural-unit row in schema order.
    pub fn predict_raw(&self, raw: &[f64]) -> std::result::Result<(u8, f64), String> {
        let x = self.encoder.encode(raw).map_err(|e| e.to_string())?;
        self.ensemble.predict(&x).map_err(|e| e.to_string())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of any serializable configuration.
pub fn config_digest<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub defect: String,
    pub file: String,
    pub sha256: String,
    pub members: usize,
    pub fusion: Fusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub format_version: u32,
    pub models: BTreeMap<String, IndexEntry>,
}

impl Default for StoreIndex {
    fn default() -> Self {
        StoreIndex {
            format_version: FORMAT_VERSION,
            models: BTreeMap::new(),
        }
    }
}

/// Lower-case ASCII alphanumerics, `-` and `_`; anything else becomes `_`.
pub fn model_id(defect: &str) -> Result<String> {
    let id: String = defect
        .trim()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    if id.is_empty() || id.chars().all(|c| c == '_') {
        return Err(StoreError::InvalidId(defect.to_string()));
    }
    Ok(id)
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone)]
pub struct ModelStore {
    root: PathBuf,
}

impl ModelStore {
    /// Opens a store directory, creating it if needed.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        io(&root, fs::create_dir_all(&root))?;
        Ok(ModelStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> Result<StoreIndex> {
        let path = self.root.join(INDEX_FILE);
        if !path.exists() {
            return Ok(StoreIndex::default());
        }
        let bytes = io(&path, fs::read(&path))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)?;
        check_version(&value)?;
        Ok(serde_json::from_value(value)?)
    }

    fn write_index(&self, index: &StoreIndex) -> Result<()> {
        let path = self.root.join(INDEX_FILE);
        let mut bytes = serde_json::to_vec_pretty(index)?;
        bytes.push(b'\n');
        io(&path, fs::write(&path, bytes))
    }

    /// Writes the record and updates the index; a model with the same id is
    /// replaced.
    pub fn save(&self, record: &ModelRecord) -> Result<String> {
        let id = model_id(&record.defect)?;
        let file = format!("{id}.json");
        let bytes = record.to_bytes()?;
        let path = self.root.join(&file);
        io(&path, fs::write(&path, &bytes))?;
        let mut index = self.index()?;
        index.models.insert(
            id.clone(),
            IndexEntry {
                id: id.clone(),
                defect: record.defect.clone(),
                file,
                sha256: sha256_hex(&bytes),
                members: record.ensemble.len(),
                fusion: record.ensemble.fusion,
            },
        );
        self.write_index(&index)?;
        Ok(id)
    }

    /// The version field is checked before the checksum so a record from a
    /// different format reports as such rather than as corruption.
    pub fn load(&self, id: &str) -> Result<ModelRecord> {
        let index = self.index()?;
        let entry = index
            .models
            .get(id)
            .ok_or_else(|| StoreError::UnknownId(id.to_string()))?;
        let path = self.root.join(&entry.file);
        let bytes = io(&path, fs::read(&path))?;
        let corrupt = |reason: String| StoreError::Corrupt {
            id: id.to_string(),
            reason,
        };
        let value: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        check_version(&value)?;
        let digest = sha256_hex(&bytes);
        if digest != entry.sha256 {
            return Err(corrupt(format!(
                "checksum {digest} does not match index {}",
                entry.sha256
            )));
        }
        serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))
    }

    pub fn load_all(&self) -> Result<Vec<ModelRecord>> {
        self.index()?.models.keys().map(|id| self.load(id)).collect()
    }
}

fn check_version(value: &serde_json::Value) -> Result<()> {
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .unwrap_or(0);
    if found != u64::from(FORMAT_VERSION) {
        return Err(StoreError::UnsupportedVersion { found });
    }
    Ok(())
}
