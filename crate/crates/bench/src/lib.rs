//! Benchmark fixtures shared by the criterion suites.

use qrw_core::domain::{CompositionRule, CriterionSpec, Direction, ScoreVector, ScorerKind};
use qrw_core::pairing::ScoredCandidate;
use qrw_core::tinylm::{encode_target, encode_text, Token};
use qrw_core::{PreferencePair, RewriteCandidate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn two_criteria() -> (Vec<CriterionSpec>, CompositionRule) {
    let specs = vec![
        CriterionSpec::new("quality", Direction::LargerIsBetter, ScorerKind::Reward),
        CriterionSpec::new("errors", Direction::SmallerIsBetter, ScorerKind::Reward),
    ];
    let rule = CompositionRule::Lexicographic {
        keys: vec![
            ("quality".into(), Direction::LargerIsBetter),
            ("errors".into(), Direction::SmallerIsBetter),
        ],
    };
    (specs, rule)
}

/// `n` rewrites of one question with scores on a coarse grid, so ties occur.
pub fn scored_candidates(specs: &[CriterionSpec], n: usize, seed: u64) -> Vec<ScoredCandidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let values: Vec<f64> = specs
                .iter()
                .map(|_| rng.random_range(0..5) as f64 / 4.0)
                .collect();
            ScoredCandidate {
                candidate: RewriteCandidate {
                    parent_id: "q".into(),
                    text: format!("rewrite number {i}"),
                    draw_index: i as u64 + 1,
                },
                scores: ScoreVector::from_specs(specs, &values),
            }
        })
        .collect()
}

/// Pairs over `questions` prompts, each with `per_question` chosen/rejected combinations.
pub fn preference_pairs(questions: usize, per_question: usize) -> Vec<PreferencePair> {
    let meta = |q: usize| qrw_core::pairing::PairMeta {
        question_id: format!("q{q}"),
        mode: Default::default(),
        seed: 0,
        chosen_rank: 1,
        rejected_draw: 1,
    };
    (0..questions)
        .flat_map(|q| {
            (0..per_question).map(move |k| PreferencePair {
                prompt: format!("Rewrite the question.\nWhat are the causes of topic {q}?"),
                chosen: format!("What are the causes and risks of topic {q}, case {k}?"),
                rejected: format!("what about {q}"),
                meta: meta(q),
            })
        })
        .collect()
}

/// Tokenized (prompt, target) pairs for forward/backward passes.
pub fn sequences(n: usize) -> Vec<(Vec<Token>, Vec<Token>)> {
    (0..n)
        .map(|i| {
            (
                encode_text(&format!("Rewrite: question {i}?")),
                encode_target(&format!(
                    "What are the symptoms and treatment of condition {i}?"
                )),
            )
        })
        .collect()
}
