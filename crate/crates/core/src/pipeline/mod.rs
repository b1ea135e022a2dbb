//! End-to-end pipeline: sampling rewrites, answering and scoring them,
//! building preference pairs, training the rewriter and evaluating it.
//!
//! Each [`Stage`] reads the artifacts of earlier stages from the output
//! directory and writes its own, so stages can be rerun one at a time.

pub mod config;
pub mod io;
pub mod manifest;
mod records;
mod stages;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::backend::cache::ResponseCache;
use crate::backend::http::{HttpChatBackend, HttpRewardBackend};
use crate::backend::{
    BackendError, ChatBackend, ChatHandle, GenerationRequest, GenerationResponse, InFlightLimit,
    RetryPolicy, RewardBackend, RewardHandle,
};
use crate::domain::{validate_dataset, QuestionRecord};
use crate::synthetic;

pub use config::{BaselineMode, PipelineConfig, Preset};
pub use manifest::{Manifest, StageRecord};
pub use records::{
    AnswerLine, CheckpointLine, EvalRow, Evaluation, ScoreLine, SelectedCheckpoint, Source,
    SystemSummary, TrainSummary,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("missing {}; run the `{stage}` stage first", path.display())]
    MissingArtifact { path: PathBuf, stage: Stage },
    #[error("artifact: {0}")]
    Artifact(String),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Rewrite,
    Answer,
    Score,
    Pair,
    Export,
    Train,
    Select,
    Evaluate,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Rewrite,
        Stage::Answer,
        Stage::Score,
        Stage::Pair,
        Stage::Export,
        Stage::Train,
        Stage::Select,
        Stage::Evaluate,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Rewrite => "rewrite",
            Stage::Answer => "answer",
            Stage::Score => "score",
            Stage::Pair => "pair",
            Stage::Export => "export",
            Stage::Train => "train",
            Stage::Select => "select",
            Stage::Evaluate => "evaluate",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// File names inside the output directory.
pub mod artifacts {
    pub const MANIFEST: &str = "manifest.json";
    pub const REWRITES: &str = "rewrites.jsonl";
    pub const ANSWERS: &str = "answers.jsonl";
    pub const SCORES: &str = "scores.jsonl";
    pub const PAIRS_TRAIN: &str = "pairs_train.jsonl";
    pub const PAIRS_VALIDATION: &str = "pairs_validation.jsonl";
    pub const PAIR_STATS: &str = "pair_stats.jsonl";
    pub const EXPORT_TRAIN: &str = "export/train.jsonl";
    pub const EXPORT_VALIDATION: &str = "export/validation.jsonl";
    pub const INITIAL_MODEL: &str = "checkpoints/initial.ckpt";
    pub const CHECKPOINTS: &str = "checkpoints.jsonl";
    pub const TRAIN_LOG: &str = "train_log.jsonl";
    pub const TRAIN_SUMMARY: &str = "train_summary.json";
    pub const SELECTED: &str = "selected.json";
    pub const REWRITER_MODEL: &str = "rewriter.ckpt";
    pub const EVALUATION: &str = "evaluation.jsonl";
    pub const EVALUATION_SUMMARY: &str = "evaluation_summary.jsonl";
    pub const EVALUATION_TSV: &str = "evaluation.tsv";
    pub const ATTRIBUTES: &str = "attributes.jsonl";
    pub const ATTRIBUTE_MATRIX: &str = "attribute_matrix.tsv";
    pub const IMPACT: &str = "impact.tsv";
    pub const REPORT_TXT: &str = "report.txt";
    pub const REPORT_TSV: &str = "report.tsv";
}

struct CountedChat {
    inner: Arc<dyn ChatBackend>,
    calls: Arc<AtomicU64>,
}

impl ChatBackend for CountedChat {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }
}

struct CountedReward {
    inner: Arc<dyn RewardBackend>,
    calls: Arc<AtomicU64>,
}

impl RewardBackend for CountedReward {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn score(&self, context: &str, answer: &str) -> Result<f64, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.score(context, answer)
    }
}

/// Raw backends for each role, before retry, cache and counting are added.
pub struct BackendSet {
    pub generator: Arc<dyn ChatBackend>,
    pub answerer: Arc<dyn ChatBackend>,
    pub judge: Arc<dyn ChatBackend>,
    pub reward: Option<Arc<dyn RewardBackend>>,
}

impl BackendSet {
    pub fn from_config(cfg: &config::BackendsConfig) -> Self {
        use config::{ChatBackendConfig as C, RewardBackendConfig as R};
        let world: Arc<dyn ChatBackend> = Arc::new(synthetic::world_chat());
        let chat = |c: &C| -> Arc<dyn ChatBackend> {
            match c {
                C::Synthetic => world.clone(),
                C::Http(ep) => Arc::new(HttpChatBackend::new(ep.clone())),
            }
        };
        Self {
            generator: chat(&cfg.generator),
            answerer: chat(&cfg.answerer),
            judge: chat(&cfg.judge),
            reward: cfg.reward.as_ref().map(|r| -> Arc<dyn RewardBackend> {
                match r {
                    R::Synthetic => Arc::new(synthetic::world_reward()),
                    R::Http(ep) => Arc::new(HttpRewardBackend::new(ep.clone())),
                }
            }),
        }
    }
}

/// Role handles sharing one cache and one call counter.
#[derive(Clone)]
pub struct Backends {
    pub generator: ChatHandle,
    pub answerer: ChatHandle,
    pub judge: ChatHandle,
    pub reward: Option<RewardHandle>,
    pub cache: Option<Arc<ResponseCache>>,
    calls: Arc<AtomicU64>,
}

impl Backends {
    pub fn new(
        set: BackendSet,
        cfg: &config::BackendsConfig,
        cache: Option<Arc<ResponseCache>>,
    ) -> Self {
        let calls = Arc::new(AtomicU64::new(0));
        let policy = RetryPolicy {
            max_attempts: cfg.max_attempts,
            initial_backoff_ms: cfg.initial_backoff_ms,
            ..RetryPolicy::default()
        };
        let chat = |b: Arc<dyn ChatBackend>| {
            let mut h = ChatHandle::new(Arc::new(CountedChat {
                inner: b,
                calls: calls.clone(),
            }))
            .with_policy(policy)
            .with_limit(Arc::new(InFlightLimit::new(cfg.max_in_flight)));
            if let Some(c) = &cache {
                h = h.with_cache(c.clone());
            }
            h
        };
        let reward = set.reward.map(|b| {
            let mut h = RewardHandle::new(Arc::new(CountedReward {
                inner: b,
                calls: calls.clone(),
            }))
            .with_policy(policy)
            .with_limit(Arc::new(InFlightLimit::new(cfg.max_in_flight)));
            if let Some(c) = &cache {
                h = h.with_cache(c.clone());
            }
            h
        });
        Self {
            generator: chat(set.generator),
            answerer: chat(set.answerer),
            judge: chat(set.judge),
            reward,
            cache,
            calls,
        }
    }

    /// Requests that reached a backend, cache hits excluded, retries included.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    out: PathBuf,
    questions: Vec<QuestionRecord>,
    backends: Backends,
}

impl Pipeline {
    /// Backends from the config; the cache lives in `cache_dir` or `<out>/cache`.
    pub fn new(cfg: PipelineConfig, out: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let out = out.into();
        let set = BackendSet::from_config(&cfg.backends);
        Self::with_backends(cfg, out, set)
    }

    pub fn with_backends(
        cfg: PipelineConfig,
        out: impl Into<PathBuf>,
        set: BackendSet,
    ) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let out = out.into();
        let cache_dir = cfg.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
        let cache =
            ResponseCache::open(&cache_dir).map_err(|e| PipelineError::io(&cache_dir, e))?;
        let backends = Backends::new(set, &cfg.backends, Some(Arc::new(cache)));
        let questions = load_questions(&cfg)?;
        Ok(Self {
            cfg,
            out,
            questions,
            backends,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn questions(&self) -> &[QuestionRecord] {
        &self.questions
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.out.join(artifact)
    }

    pub fn manifest(&self) -> Result<Manifest, PipelineError> {
        Manifest::load_or_new(&self.path(artifacts::MANIFEST), &self.cfg)
    }

    /// Runs one stage and records it in the manifest.
    pub fn run_stage(&self, stage: Stage) -> Result<StageRecord, PipelineError> {
        let started = manifest::unix_now();
        let clock = Instant::now();
        let cache_before = self
            .backends
            .cache
            .as_ref()
            .map(|c| c.stats())
            .unwrap_or_default();
        let calls_before = self.backends.calls();
        log::info!("stage {stage}: start");
        let outcome = stages::run(self, stage)?;
        let cache_after = self
            .backends
            .cache
            .as_ref()
            .map(|c| c.stats())
            .unwrap_or_default();
        let record = StageRecord {
            counts: outcome.counts,
            warnings: outcome.warnings,
            cache: cache_after.since(&cache_before),
            backend_calls: self.backends.calls() - calls_before,
            started_unix: started,
            finished_unix: manifest::unix_now(),
            duration_ms: clock.elapsed().as_millis() as u64,
        };
        for w in &record.warnings {
            log::warn!("stage {stage}: {w}");
        }
        let mut m = self.manifest()?;
        m.record(stage, record.clone(), &self.cfg);
        m.save(&self.path(artifacts::MANIFEST))?;
        log::info!("stage {stage}: done in {} ms", record.duration_ms);
        Ok(record)
    }

    pub fn run_all(&self) -> Result<(), PipelineError> {
        for stage in Stage::ALL {
            self.run_stage(stage)?;
        }
        Ok(())
    }

    /// Answers and scores `split` for every available system without writing anything.
    pub fn evaluate_split(&self, split: crate::domain::Split) -> Result<Evaluation, PipelineError> {
        stages::evaluate_split(self, split)
    }
}

fn load_questions(cfg: &PipelineConfig) -> Result<Vec<QuestionRecord>, PipelineError> {
    let questions: Vec<QuestionRecord> = match &cfg.dataset.path {
        None => synthetic::fixture_questions().to_vec(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
            let mut out = Vec::new();
            for (i, line) in text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
            {
                let q = serde_json::from_str(line).map_err(|e| {
                    PipelineError::Dataset(format!("{}:{}: {e}", path.display(), i + 1))
                })?;
                out.push(q);
            }
            out
        }
    };
    validate_dataset(&questions).map_err(|e| PipelineError::Dataset(e.to_string()))?;
    if cfg.preset == Preset::Kqa {
        if let Some(q) = questions
            .iter()
            .find(|q| q.must_have.as_ref().is_none_or(|m| m.is_empty()))
        {
            return Err(PipelineError::Dataset(format!(
                "question {} has no must_have facts",
                q.id
            )));
        }
    }
    Ok(questions)
}
