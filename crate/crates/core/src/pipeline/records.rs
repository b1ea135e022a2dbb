//! Line types of the pipeline artifacts.

use serde::{Deserialize, Serialize};

use crate::criteria::AnswerRecord;
use crate::domain::{ScoreVector, Split};
use crate::tinylm::FitReport;

/// Where a question text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// The question as written.
    Original,
    /// A sampled rewrite used for pairing.
    Rewrite,
    /// The question followed by the reasoning trigger.
    ZeroShotCot,
    /// Greedy decode of the rewriter before preference training.
    InitialRewriter,
    /// Greedy decode of the selected checkpoint.
    Rewriter,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Original => "original",
            Source::Rewrite => "rewrite",
            Source::ZeroShotCot => "zero_shot_cot",
            Source::InitialRewriter => "initial_rewriter",
            Source::Rewriter => "rewriter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteLine {
    pub question_id: String,
    pub split: Split,
    pub text: String,
    pub draw_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerLine {
    pub question_id: String,
    pub split: Split,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draw_index: Option<u64>,
    pub answer: AnswerRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub question_id: String,
    pub split: Split,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draw_index: Option<u64>,
    /// Question text that was answered.
    pub text: String,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatsLine {
    pub split: Split,
    pub question_id: String,
    pub n_plus_available: usize,
    pub n_minus_available: usize,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportLine {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLine {
    pub step: usize,
    pub file: String,
    pub checksum: String,
    pub validation_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub pairs_train: usize,
    pub pairs_validation: usize,
    pub initial_checksum: String,
    /// Present when the initial model was fitted rather than loaded.
    pub warm_start: Option<FitReport>,
    pub initial_loss: f64,
    pub epoch_mean_loss: Vec<f64>,
    pub final_eval_loss: f64,
    pub final_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedCheckpoint {
    pub v: u32,
    pub step: usize,
    pub validation_ps: f64,
    pub checksum: String,
}

/// One system's answer to one evaluation question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub system: Source,
    pub question_id: String,
    pub text: String,
    /// The decoded rewrite was empty and the original question was used.
    #[serde(default)]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ScoreVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub system: Source,
    pub questions: usize,
    pub scored: usize,
    /// Questions dropped from the means because answering or scoring failed.
    pub excluded: usize,
    pub fallbacks: usize,
    pub means: Vec<(String, f64)>,
}

impl SystemSummary {
    pub fn mean(&self, criterion: &str) -> Option<f64> {
        self.means
            .iter()
            .find(|(n, _)| n == criterion)
            .map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub split: Split,
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<SystemSummary>,
}

impl Evaluation {
    pub fn summary(&self, system: Source) -> Option<&SystemSummary> {
        self.summaries.iter().find(|s| s.system == system)
    }
}
