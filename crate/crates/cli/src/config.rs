use std::path::Path;

use anyhow::Result;
use qmon_core::classifiers::ClassifierConfig;
use qmon_core::doe::{LevelSpec, Response};
use qmon_core::ensemble::{FuserConfig, PoolSpec, SelectConfig, Strategy};
use qmon_core::eval::{TrainerSpec, DEFAULT_INNER_FRACTION};
use qmon_core::Family;
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Defect-type name; the stored model id is derived from it.
    pub defect: String,
    pub n: usize,
    pub defect_rate: f64,
    /// Share of rows used to train pool members; the rest validate.
    pub holdout_fraction: f64,
    pub pool: PoolSpec,
    pub strategy: Strategy,
    pub select: SelectConfig,
    pub fuser: FuserConfig,
    pub crossval: CrossvalConfig,
    pub doe: DoeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalConfig {
    pub k: usize,
    pub trainers: Vec<TrainerSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoeConfig {
    pub levels: LevelSpec,
    pub response: Response,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            defect: "defect".into(),
            n: 2270,
            defect_rate: 0.12,
            holdout_fraction: DEFAULT_INNER_FRACTION,
            pool: PoolSpec::default(),
            strategy: Strategy::Sad,
            select: SelectConfig::default(),
            fuser: FuserConfig::default(),
            crossval: CrossvalConfig::default(),
            doe: DoeConfig::default(),
        }
    }
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        let mut trainers: Vec<TrainerSpec> = Family::ALL
            .iter()
            .map(|&family| TrainerSpec::Single {
                family,
                config: ClassifierConfig::default(),
                inner_fraction: DEFAULT_INNER_FRACTION,
            })
            .collect();
        trainers.push(TrainerSpec::Constant { class: 0 });
        CrossvalConfig { k: 10, trainers }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Invalid(format!("invalid config {}: {e}", path.display())))?;
        Ok(config)
    }
}
