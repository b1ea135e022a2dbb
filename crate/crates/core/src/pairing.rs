//! Better/worse preference pairs from classified, ranked rewrites.
//!
//! Candidates are split into those that dominate the original question's
//! answer and those dominated by it. One side of each pair is truncated by
//! rank, the other is sampled without replacement, and every combination of
//! the two sides becomes a pair.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    classify_candidate, rank_indices, CandidateClass, CompositionRule, CriterionSpec, DomainError,
    QuestionRecord, ScoreVector,
};
use crate::sampling::{render_rewrite_prompt, RewriteCandidate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationMode {
    /// Top of Q+ against a random draw from Q-.
    #[default]
    BestRandom,
    RandomWorst,
    BestWorst,
    RandomRandom,
}

impl CombinationMode {
    pub const ALL: [CombinationMode; 4] = [
        CombinationMode::BestRandom,
        CombinationMode::RandomWorst,
        CombinationMode::BestWorst,
        CombinationMode::RandomRandom,
    ];

    fn chosen_by_rank(self) -> bool {
        matches!(
            self,
            CombinationMode::BestRandom | CombinationMode::BestWorst
        )
    }

    fn rejected_by_rank(self) -> bool {
        matches!(
            self,
            CombinationMode::RandomWorst | CombinationMode::BestWorst
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingConfig {
    pub n_plus: usize,
    pub n_minus: usize,
    #[serde(default)]
    pub mode: CombinationMode,
    #[serde(default)]
    pub seed: u64,
}

impl PairingConfig {
    pub const KQA: (usize, usize) = (10, 20);
    pub const TRUTHFULQA: (usize, usize) = (5, 10);
    pub const OASST1: (usize, usize) = (4, 5);

    pub fn new((n_plus, n_minus): (usize, usize), seed: u64) -> Self {
        Self {
            n_plus,
            n_minus,
            mode: CombinationMode::BestRandom,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: RewriteCandidate,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Partition {
    pub plus: Vec<ScoredCandidate>,
    pub minus: Vec<ScoredCandidate>,
}

/// Keeps Better candidates in `plus` and Worse ones in `minus`; Equal and
/// Mixed are dropped. Input order is preserved within each side.
pub fn partition_candidates(
    candidates: &[ScoredCandidate],
    baseline: &ScoreVector,
    specs: &[CriterionSpec],
) -> Result<Partition, DomainError> {
    let mut out = Partition::default();
    for c in candidates {
        match classify_candidate(&c.scores, baseline, specs)? {
            CandidateClass::Better => out.plus.push(c.clone()),
            CandidateClass::Worse => out.minus.push(c.clone()),
            CandidateClass::Equal | CandidateClass::Mixed => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    pub question_id: String,
    pub mode: CombinationMode,
    pub seed: u64,
    /// 1-based position of the chosen text in the Q+ ranking.
    pub chosen_rank: usize,
    pub rejected_draw: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    /// Rewrite instruction followed by the original question.
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: PairMeta,
}

/// Per-question generator seeded from the global seed and the question id.
pub fn question_rng(seed: u64, question_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"pairing");
    h.update(seed.to_le_bytes());
    h.update(question_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Indices into a side of the partition, already truncated to `n`.
fn pick_side(
    side: &[ScoredCandidate],
    n: usize,
    by_rank: bool,
    reversed: bool,
    rule: &CompositionRule,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, DomainError> {
    let n = n.min(side.len());
    if by_rank {
        let scores = side.iter().map(|c| &c.scores);
        let order = if reversed {
            rank_indices(scores, rule.reversed())?
        } else {
            rank_indices(scores, rule)?
        };
        Ok(order.into_iter().take(n).collect())
    } else {
        Ok(sample(rng, side.len(), n).into_vec())
    }
}

pub fn build_pairs(
    question_id: &str,
    prompt: &str,
    plus: &[ScoredCandidate],
    minus: &[ScoredCandidate],
    cfg: &PairingConfig,
    rule: &CompositionRule,
) -> Result<Vec<PreferencePair>, DomainError> {
    if plus.is_empty() || minus.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = question_rng(cfg.seed, question_id);
    let ranking = rank_indices(plus.iter().map(|c| &c.scores), rule)?;
    let mut rank_of = vec![0usize; plus.len()];
    for (pos, &i) in ranking.iter().enumerate() {
        rank_of[i] = pos + 1;
    }
    let chosen = pick_side(
        plus,
        cfg.n_plus,
        cfg.mode.chosen_by_rank(),
        false,
        rule,
        &mut rng,
    )?;
    let rejected = pick_side(
        minus,
        cfg.n_minus,
        cfg.mode.rejected_by_rank(),
        true,
        rule,
        &mut rng,
    )?;
    let mut pairs = Vec::with_capacity(chosen.len() * rejected.len());
    for &c in &chosen {
        for &r in &rejected {
            pairs.push(PreferencePair {
                prompt: prompt.to_string(),
                chosen: plus[c].candidate.text.clone(),
                rejected: minus[r].candidate.text.clone(),
                meta: PairMeta {
                    question_id: question_id.to_string(),
                    mode: cfg.mode,
                    seed: cfg.seed,
                    chosen_rank: rank_of[c],
                    rejected_draw: minus[r].candidate.draw_index,
                },
            });
        }
    }
    Ok(pairs)
}

/// Everything pairing needs to know about one question.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionCandidates {
    pub question: QuestionRecord,
    pub baseline: ScoreVector,
    pub candidates: Vec<ScoredCandidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionPairStats {
    pub question_id: String,
    pub n_plus_available: usize,
    pub n_minus_available: usize,
    pub n_pairs: usize,
}

/// Pairs for every question, concatenated in dataset order.
pub fn dataset_pairs(
    dataset: &[QuestionCandidates],
    specs: &[CriterionSpec],
    cfg: &PairingConfig,
    rule: &CompositionRule,
) -> Result<(Vec<PreferencePair>, Vec<QuestionPairStats>), DomainError> {
    rule.check_against(specs)?;
    let mut pairs = Vec::new();
    let mut stats = Vec::with_capacity(dataset.len());
    for item in dataset {
        let part = partition_candidates(&item.candidates, &item.baseline, specs)?;
        let prompt = render_rewrite_prompt(&item.question.text)
            .map_err(|e| DomainError::InvalidQuestion(e.to_string()))?;
        let built = build_pairs(
            &item.question.id,
            &prompt,
            &part.plus,
            &part.minus,
            cfg,
            rule,
        )?;
        stats.push(QuestionPairStats {
            question_id: item.question.id.clone(),
            n_plus_available: part.plus.len(),
            n_minus_available: part.minus.len(),
            n_pairs: built.len(),
        });
        pairs.extend(built);
    }
    Ok((pairs, stats))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::domain::{Direction, ScorerKind, Split};

    fn specs() -> Vec<CriterionSpec> {
        vec![
            CriterionSpec::new("a", Direction::LargerIsBetter, ScorerKind::Reward),
            CriterionSpec::new("b", Direction::SmallerIsBetter, ScorerKind::Reward),
        ]
    }

    fn scored(text: &str, draw: u64, a: f64, b: f64) -> ScoredCandidate {
        ScoredCandidate {
            candidate: RewriteCandidate {
                parent_id: "q".into(),
                text: text.into(),
                draw_index: draw,
            },
            scores: ScoreVector::from_specs(&specs(), &[a, b]),
        }
    }

    fn single_rule() -> CompositionRule {
        CompositionRule::Single { key: "a".into() }
    }

    #[test]
    fn partition_example() {
        let base = ScoreVector::from_specs(&specs(), &[0.5, 0.3]);
        let cands = vec![
            scored("x", 1, 0.6, 0.3),
            scored("y", 2, 0.6, 0.4),
            scored("z", 3, 0.4, 0.4),
        ];
        let p = partition_candidates(&cands, &base, &specs()).unwrap();
        assert_eq!(p.plus, vec![cands[0].clone()]);
        assert_eq!(p.minus, vec![cands[2].clone()]);

        let equal = vec![scored("x", 1, 0.5, 0.3), scored("y", 2, 0.5, 0.3)];
        let p = partition_candidates(&equal, &base, &specs()).unwrap();
        assert!(p.plus.is_empty() && p.minus.is_empty());
    }

    fn sides(n_plus: usize, n_minus: usize) -> (Vec<ScoredCandidate>, Vec<ScoredCandidate>) {
        let plus = (0..n_plus)
            .map(|i| scored(&format!("p{i}"), i as u64 + 1, 0.6 + i as f64 * 0.001, 0.3))
            .collect();
        let minus = (0..n_minus)
            .map(|i| {
                scored(
                    &format!("m{i}"),
                    100 + i as u64,
                    0.4 - i as f64 * 0.001,
                    0.3,
                )
            })
            .collect();
        (plus, minus)
    }

    #[test]
    fn pair_counts() {
        let cfg = PairingConfig::new(PairingConfig::KQA, 3);
        let (plus, minus) = sides(12, 25);
        assert_eq!(
            build_pairs("q", "t q", &plus, &minus, &cfg, &single_rule())
                .unwrap()
                .len(),
            200
        );
        let (plus, minus) = sides(3, 25);
        assert_eq!(
            build_pairs("q", "t q", &plus, &minus, &cfg, &single_rule())
                .unwrap()
                .len(),
            60
        );
        let (plus, minus) = sides(3, 0);
        assert!(build_pairs("q", "t q", &plus, &minus, &cfg, &single_rule())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn best_random_takes_top_ranked_chosen() {
        let (plus, minus) = sides(12, 25);
        let cfg = PairingConfig::new((2, 3), 9);
        let pairs = build_pairs("q", "prompt", &plus, &minus, &cfg, &single_rule()).unwrap();
        let chosen: Vec<_> = pairs.iter().map(|p| p.chosen.as_str()).collect();
        // p11 has the largest `a`, then p10.
        assert_eq!(chosen, ["p11", "p11", "p11", "p10", "p10", "p10"]);
        assert_eq!(pairs[0].meta.chosen_rank, 1);
        assert_eq!(pairs[3].meta.chosen_rank, 2);
        let rejected: HashSet<_> = pairs.iter().map(|p| p.rejected.clone()).collect();
        assert_eq!(rejected.len(), 3);
        assert!(pairs.iter().all(|p| p.prompt == "prompt"));
    }

    #[test]
    fn best_worst_uses_bottom_and_no_randomness() {
        let (plus, minus) = sides(5, 6);
        let a = PairingConfig {
            mode: CombinationMode::BestWorst,
            ..PairingConfig::new((2, 2), 1)
        };
        let b = PairingConfig { seed: 999, ..a };
        let pa = build_pairs("q", "t", &plus, &minus, &a, &single_rule()).unwrap();
        let pb = build_pairs("q", "t", &plus, &minus, &b, &single_rule()).unwrap();
        let strip = |ps: &[PreferencePair]| {
            ps.iter()
                .map(|p| (p.chosen.clone(), p.rejected.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&pa), strip(&pb));
        // m5 has the smallest `a`, so it is the worst.
        let rejected: Vec<_> = pa.iter().take(2).map(|p| p.rejected.as_str()).collect();
        assert_eq!(rejected, ["m5", "m4"]);
    }

    #[test]
    fn seed_and_question_drive_sampling() {
        let (plus, minus) = sides(10, 40);
        let cfg = PairingConfig::new((1, 5), 42);
        let a = build_pairs("q1", "t", &plus, &minus, &cfg, &single_rule()).unwrap();
        let again = build_pairs("q1", "t", &plus, &minus, &cfg, &single_rule()).unwrap();
        let other = build_pairs("q2", "t", &plus, &minus, &cfg, &single_rule()).unwrap();
        assert_eq!(a, again);
        let rej = |ps: &[PreferencePair]| ps.iter().map(|p| p.rejected.clone()).collect::<Vec<_>>();
        assert_ne!(rej(&a), rej(&other));
    }

    fn question(id: &str) -> QuestionRecord {
        QuestionRecord {
            id: id.into(),
            text: format!("question {id}"),
            split: Split::Train,
            must_have: None,
            context: None,
        }
    }

    #[test]
    fn dataset_concatenates_in_order() {
        let base = ScoreVector::from_specs(&specs(), &[0.5, 0.3]);
        let (plus, minus) = sides(2, 2);
        let mut cands = plus.clone();
        cands.extend(minus.clone());
        let data = vec![
            QuestionCandidates {
                question: question("b"),
                baseline: base.clone(),
                candidates: cands.clone(),
            },
            QuestionCandidates {
                question: question("a"),
                baseline: base.clone(),
                candidates: plus.clone(),
            },
            QuestionCandidates {
                question: question("c"),
                baseline: base,
                candidates: cands,
            },
        ];
        let (pairs, stats) = dataset_pairs(
            &data,
            &specs(),
            &PairingConfig::new((10, 20), 0),
            &single_rule(),
        )
        .unwrap();
        assert_eq!(pairs.len(), 8);
        assert_eq!(pairs[0].meta.question_id, "b");
        assert_eq!(pairs[4].meta.question_id, "c");
        assert_eq!(
            stats[1],
            QuestionPairStats {
                question_id: "a".into(),
                n_plus_available: 2,
                n_minus_available: 0,
                n_pairs: 0
            }
        );
        assert!(pairs[0].prompt.ends_with("\nquestion b"));
    }

    #[test]
    fn single_pair_dataset() {
        let base = ScoreVector::from_specs(&specs(), &[0.5, 0.3]);
        let data = vec![QuestionCandidates {
            question: question("only"),
            baseline: base,
            candidates: vec![scored("good", 1, 0.9, 0.1), scored("bad", 2, 0.1, 0.9)],
        }];
        let (pairs, _) = dataset_pairs(
            &data,
            &specs(),
            &PairingConfig::new((10, 20), 0),
            &single_rule(),
        )
        .unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(
            (pairs[0].chosen.as_str(), pairs[0].rejected.as_str()),
            ("good", "bad")
        );
    }

    #[test]
    fn saturated_kqa_sizing() {
        let base = ScoreVector::from_specs(&specs(), &[0.5, 0.3]);
        let (plus, minus) = sides(15, 30);
        let mut cands = plus;
        cands.extend(minus);
        let data: Vec<_> = (0..101)
            .map(|i| QuestionCandidates {
                question: question(&format!("q{i:03}")),
                baseline: base.clone(),
                candidates: cands.clone(),
            })
            .collect();
        let (pairs, _) = dataset_pairs(
            &data,
            &specs(),
            &PairingConfig::new(PairingConfig::KQA, 0),
            &single_rule(),
        )
        .unwrap();
        assert_eq!(pairs.len(), 20_200);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mode() -> impl Strategy<Value = CombinationMode> {
            proptest::sample::select(CombinationMode::ALL.to_vec())
        }

        proptest! {
            #[test]
            fn cardinality_and_membership(
                n_plus_avail in 0usize..15, n_minus_avail in 0usize..25,
                n_plus in 1usize..12, n_minus in 1usize..22,
                mode in mode(), seed in any::<u64>(),
            ) {
                let (plus, minus) = sides(n_plus_avail, n_minus_avail);
                let cfg = PairingConfig { n_plus, n_minus, mode, seed };
                let pairs = build_pairs("q", "t", &plus, &minus, &cfg, &single_rule()).unwrap();
                prop_assert_eq!(pairs.len(), n_plus.min(n_plus_avail) * n_minus.min(n_minus_avail));
                let plus_texts: HashSet<_> = plus.iter().map(|c| c.candidate.text.clone()).collect();
                let minus_texts: HashSet<_> = minus.iter().map(|c| c.candidate.text.clone()).collect();
                for p in &pairs {
                    prop_assert!(plus_texts.contains(&p.chosen));
                    prop_assert!(minus_texts.contains(&p.rejected));
                    prop_assert_ne!(&p.chosen, &p.rejected);
                }
                // Without replacement: each (chosen, rejected) combination appears once.
                let distinct: HashSet<_> = pairs.iter().map(|p| (p.chosen.clone(), p.rejected.clone())).collect();
                prop_assert_eq!(distinct.len(), pairs.len());
            }
        }
    }
}
