//! Pipeline configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::http::HttpEndpoint;
use crate::domain::{CompositionRule, CriterionSpec, Direction, ScorerKind, Split};
use crate::dpo::TrainConfig;
use crate::pairing::{CombinationMode, PairingConfig};
use crate::sampling::SamplerConfig;
use crate::synthetic;
use crate::tinylm::{FitConfig, TinyLmConfig};

use super::PipelineError;

/// Dataset family; fixes the criteria and how they are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Kqa,
    Truthfulqa,
    Oasst1,
    Synthetic,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Kqa,
        Preset::Truthfulqa,
        Preset::Oasst1,
        Preset::Synthetic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Kqa => "kqa",
            Preset::Truthfulqa => "truthfulqa",
            Preset::Oasst1 => "oasst1",
            Preset::Synthetic => "synthetic",
        }
    }

    pub fn specs(self) -> Vec<CriterionSpec> {
        use Direction::*;
        match self {
            Preset::Kqa => vec![
                CriterionSpec::new("s_comp", LargerIsBetter, ScorerKind::FactJudge),
                CriterionSpec::new("s_cont", SmallerIsBetter, ScorerKind::FactJudge),
            ],
            Preset::Truthfulqa => vec![
                CriterionSpec::new("s_truth", LargerIsBetter, ScorerKind::BinaryJudge),
                CriterionSpec::new("s_info", LargerIsBetter, ScorerKind::BinaryJudge),
                CriterionSpec::new("s_overall", LargerIsBetter, ScorerKind::DerivedProduct),
            ],
            Preset::Oasst1 => vec![CriterionSpec::new(
                "s_pref",
                LargerIsBetter,
                ScorerKind::Reward,
            )],
            Preset::Synthetic => vec![CriterionSpec::new(
                synthetic::CRITERION,
                LargerIsBetter,
                ScorerKind::Reward,
            )],
        }
    }

    pub fn rule(self) -> CompositionRule {
        match self {
            Preset::Kqa => CompositionRule::Lexicographic {
                keys: vec![
                    ("s_cont".into(), Direction::SmallerIsBetter),
                    ("s_comp".into(), Direction::LargerIsBetter),
                ],
            },
            Preset::Truthfulqa => CompositionRule::Product {
                keys: vec!["s_truth".into(), "s_info".into()],
            },
            Preset::Oasst1 => CompositionRule::Single {
                key: "s_pref".into(),
            },
            Preset::Synthetic => CompositionRule::Single {
                key: synthetic::CRITERION.into(),
            },
        }
    }

    /// Default (N+, N-).
    pub fn pair_counts(self) -> (usize, usize) {
        match self {
            Preset::Kqa | Preset::Synthetic => PairingConfig::KQA,
            Preset::Truthfulqa => PairingConfig::TRUTHFULQA,
            Preset::Oasst1 => PairingConfig::OASST1,
        }
    }

    fn needs_reward(self) -> bool {
        matches!(self, Preset::Oasst1 | Preset::Synthetic)
    }
}

/// Which reference rows `evaluate` adds next to the rewriter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    None,
    /// The question as written.
    #[default]
    Original,
    /// The question as written, plus the question followed by a reasoning trigger.
    ZeroShotCot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChatBackendConfig {
    /// In-process scripted world, see [`crate::synthetic`].
    Synthetic,
    Http(HttpEndpoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardBackendConfig {
    Synthetic,
    Http(HttpEndpoint),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendsConfig {
    pub generator: ChatBackendConfig,
    pub answerer: ChatBackendConfig,
    pub judge: ChatBackendConfig,
    pub reward: Option<RewardBackendConfig>,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        Self {
            generator: ChatBackendConfig::Synthetic,
            answerer: ChatBackendConfig::Synthetic,
            judge: ChatBackendConfig::Synthetic,
            reward: Some(RewardBackendConfig::Synthetic),
            max_in_flight: 8,
            max_attempts: 3,
            initial_backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Question JSONL; the bundled synthetic set when absent.
    pub path: Option<PathBuf>,
}

/// Overrides on top of the preset's pairing defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PairingSection {
    pub n_plus: Option<usize>,
    pub n_minus: Option<usize>,
    pub mode: CombinationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub tinylm: TinyLmConfig,
    pub init_scale: f64,
    /// Likelihood fit of a fresh model on the sampled training rewrites.
    pub warm_start: FitConfig,
    /// Start from this model instead of fitting one.
    pub init_checkpoint: Option<PathBuf>,
    pub decode_max_tokens: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            tinylm: TinyLmConfig::default(),
            init_scale: 0.5,
            warm_start: FitConfig {
                epochs: 3,
                ..FitConfig::default()
            },
            init_checkpoint: None,
            decode_max_tokens: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSection {
    pub baseline: BaselineMode,
    pub cot_trigger: String,
    pub split: Split,
    pub answer_max_tokens: u32,
    /// Accept a bare yes/no reply when a judge returns no logprobs.
    pub textual_fallback: bool,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            baseline: BaselineMode::Original,
            cot_trigger: "Let's think step by step.".into(),
            split: Split::Test,
            answer_max_tokens: 512,
            textual_fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preset: Preset,
    /// Drives pairing, model init, warm start and training; sub-section seeds are ignored.
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub backends: BackendsConfig,
    pub sampler: SamplerConfig,
    /// Missing counts are filled from the preset after parsing.
    #[serde(default)]
    pub pairing: PairingSection,
    pub train: TrainConfig,
    pub model: ModelSection,
    pub evaluate: EvaluateSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_preset(Preset::Synthetic)
    }
}

impl PipelineConfig {
    /// Defaults with the preset's pair counts written out.
    pub fn for_preset(preset: Preset) -> Self {
        let (n_plus, n_minus) = preset.pair_counts();
        Self {
            preset,
            seed: 0,
            cache_dir: None,
            dataset: DatasetConfig::default(),
            backends: BackendsConfig::default(),
            sampler: SamplerConfig::default(),
            pairing: PairingSection {
                n_plus: Some(n_plus),
                n_minus: Some(n_minus),
                mode: CombinationMode::BestRandom,
            },
            train: TrainConfig::default(),
            model: ModelSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }

    /// The bundled synthetic run: defaults plus a learning rate large enough
    /// for the tiny model to move within one epoch.
    pub fn synthetic_demo() -> Self {
        let mut cfg = Self::for_preset(Preset::Synthetic);
        cfg.train.learning_rate = 1.0;
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let (n_plus, n_minus) = cfg.preset.pair_counts();
        cfg.pairing.n_plus.get_or_insert(n_plus);
        cfg.pairing.n_minus.get_or_insert(n_minus);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.sampler
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.model
            .tinylm
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let p = self.pairing_config();
        if p.n_plus == 0 || p.n_minus == 0 {
            return bad("pairing n_plus and n_minus must be positive".into());
        }
        if self.backends.max_in_flight == 0 || self.backends.max_attempts == 0 {
            return bad("backends.max_in_flight and backends.max_attempts must be positive".into());
        }
        if self.preset.needs_reward() && self.backends.reward.is_none() {
            return bad(format!(
                "preset {} needs a reward backend",
                self.preset.as_str()
            ));
        }
        if self.evaluate.baseline == BaselineMode::ZeroShotCot
            && self.evaluate.cot_trigger.trim().is_empty()
        {
            return bad("evaluate.cot_trigger is empty".into());
        }
        if self.model.decode_max_tokens == 0 {
            return bad("model.decode_max_tokens must be positive".into());
        }
        Ok(())
    }

    pub fn pairing_config(&self) -> PairingConfig {
        let (n_plus, n_minus) = self.preset.pair_counts();
        PairingConfig {
            n_plus: self.pairing.n_plus.unwrap_or(n_plus),
            n_minus: self.pairing.n_minus.unwrap_or(n_minus),
            mode: self.pairing.mode,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            seed: self.seed,
            ..self.model.warm_start
        }
    }
}
