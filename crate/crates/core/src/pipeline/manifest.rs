//! Run manifest: config digest plus per-stage counts, cache use and timing.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::backend::cache::CacheStats;

use super::io::{read_json, write_json, FORMAT_VERSION};
use super::{PipelineConfig, PipelineError, Stage};

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub counts: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
    pub cache: CacheStats,
    pub backend_calls: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub duration_ms: u64,
}

impl StageRecord {
    pub fn count(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub v: u32,
    pub config_digest: String,
    pub preset: String,
    pub seed: u64,
    /// Latest run of each stage.
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            v: FORMAT_VERSION,
            config_digest: cfg.digest(),
            preset: cfg.preset.as_str().into(),
            seed: cfg.seed,
            stages: BTreeMap::new(),
        }
    }

    pub fn load_or_new(path: &Path, cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        if path.exists() {
            let m: Manifest = read_json(path)?;
            if m.v != FORMAT_VERSION {
                return Err(PipelineError::Artifact(format!(
                    "{}: unsupported manifest version {}",
                    path.display(),
                    m.v
                )));
            }
            Ok(m)
        } else {
            Ok(Self::new(cfg))
        }
    }

    /// Stores `record`; a changed config digest drops the records made under the old one.
    pub fn record(&mut self, stage: Stage, record: StageRecord, cfg: &PipelineConfig) {
        let digest = cfg.digest();
        if digest != self.config_digest {
            *self = Self::new(cfg);
        }
        self.stages.insert(stage.as_str().into(), record);
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.get(stage.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        write_json(path, self)
    }
}
