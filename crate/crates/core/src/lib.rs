//! Question rewriting by preference optimisation over answer quality.
//!
//! Rewrites of each question are sampled, answered, scored on several
//! criteria and compared with the original question's answer. Rewrites that
//! dominate the original are paired against rewrites it dominates, and a small
//! language model is trained on those pairs with direct preference
//! optimisation.

pub mod analysis;
pub mod backend;
pub mod criteria;
pub mod domain;
pub mod dpo;
pub mod pairing;
pub mod pipeline;
pub mod sampling;
pub mod synthetic;
pub mod tinylm;

pub use domain::{
    classify_candidate, rank_candidates, CandidateClass, CompositionRule, CriterionSpec, Direction,
    DomainError, QuestionRecord, ScoreVector, ScorerKind, Split,
};
pub use pairing::{CombinationMode, PairingConfig, PreferencePair};
pub use pipeline::{Pipeline, PipelineConfig, PipelineError, Preset, Stage};
pub use sampling::{RewriteCandidate, SamplerConfig};
pub use tinylm::{TinyLm, TinyLmConfig};
