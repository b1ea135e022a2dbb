//! Shared domain types and the criterion comparison algebra.
//!
//! A candidate rewrite is compared against the answer to the original
//! question criterion by criterion. Smaller-is-better criteria are negated
//! before comparison so a single comparator serves both directions.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("score vector covers {found:?}, expected criteria {expected:?}")]
    CriteriaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("composition rule references unknown criterion `{0}`")]
    UnknownCriterion(String),
    #[error("duplicate criterion name `{0}`")]
    DuplicateCriterion(String),
    #[error("non-finite value for criterion `{0}`")]
    NonFinite(String),
    #[error("invalid question record: {0}")]
    InvalidQuestion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// One original question of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub text: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub must_have: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.text.trim().is_empty() {
            return Err(DomainError::InvalidQuestion(format!(
                "question `{}` has empty text",
                self.id
            )));
        }
        if matches!(&self.must_have, Some(facts) if facts.is_empty()) {
            return Err(DomainError::InvalidQuestion(format!(
                "question `{}` has an empty must_have list",
                self.id
            )));
        }
        Ok(())
    }
}

/// Checks record invariants plus id uniqueness across the dataset.
pub fn validate_dataset(questions: &[QuestionRecord]) -> Result<(), DomainError> {
    let mut seen = HashSet::new();
    for q in questions {
        q.validate()?;
        if !seen.insert(q.id.as_str()) {
            return Err(DomainError::InvalidQuestion(format!(
                "duplicate question id `{}`",
                q.id
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LargerIsBetter,
    SmallerIsBetter,
}

impl Direction {
    /// Maps a raw value onto the larger-is-better axis.
    #[inline]
    pub fn oriented(self, value: f64) -> f64 {
        match self {
            Direction::LargerIsBetter => value,
            Direction::SmallerIsBetter => -value,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Direction::LargerIsBetter => Direction::SmallerIsBetter,
            Direction::SmallerIsBetter => Direction::LargerIsBetter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    FactJudge,
    BinaryJudge,
    Reward,
    DerivedProduct,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CriterionSpec {
    pub name: String,
    pub direction: Direction,
    pub scorer_kind: ScorerKind,
}

impl CriterionSpec {
    pub fn new(name: impl Into<String>, direction: Direction, scorer_kind: ScorerKind) -> Self {
        Self {
            name: name.into(),
            direction,
            scorer_kind,
        }
    }
}

pub fn validate_specs(specs: &[CriterionSpec]) -> Result<(), DomainError> {
    let mut seen = HashSet::new();
    for s in specs {
        if !seen.insert(s.name.as_str()) {
            return Err(DomainError::DuplicateCriterion(s.name.clone()));
        }
    }
    Ok(())
}

/// Per-answer criterion values in criteria-set order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoreVector {
    pub values: Vec<(String, f64)>,
}

impl ScoreVector {
    pub fn new(values: Vec<(String, f64)>) -> Self {
        Self { values }
    }

    /// Builds a vector from bare values aligned with `specs`.
    pub fn from_specs(specs: &[CriterionSpec], values: &[f64]) -> Self {
        assert_eq!(specs.len(), values.len(), "one value per criterion");
        Self {
            values: specs
                .iter()
                .zip(values)
                .map(|(s, v)| (s.name.clone(), *v))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn names(&self) -> Vec<String> {
        self.values.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Values reordered to follow `specs`, failing if the sets differ.
    pub fn aligned(&self, specs: &[CriterionSpec]) -> Result<Vec<f64>, DomainError> {
        let mismatch = || DomainError::CriteriaMismatch {
            expected: specs.iter().map(|s| s.name.clone()).collect(),
            found: self.names(),
        };
        if self.values.len() != specs.len() {
            return Err(mismatch());
        }
        specs
            .iter()
            .map(|s| {
                let v = self.get(&s.name).ok_or_else(mismatch)?;
                if !v.is_finite() {
                    return Err(DomainError::NonFinite(s.name.clone()));
                }
                Ok(v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CandidateClass {
    Better,
    Worse,
    Mixed,
    Equal,
}

impl CandidateClass {
    pub fn mirrored(self) -> Self {
        match self {
            CandidateClass::Better => CandidateClass::Worse,
            CandidateClass::Worse => CandidateClass::Better,
            other => other,
        }
    }
}

/// Classifies a candidate against the baseline answer.
///
/// Better: no criterion worse and at least one strictly better. Worse is the
/// mirror. Comparison is exact; no tolerance is applied.
pub fn classify_candidate(
    candidate_scores: &ScoreVector,
    baseline_scores: &ScoreVector,
    specs: &[CriterionSpec],
) -> Result<CandidateClass, DomainError> {
    let cand = candidate_scores.aligned(specs)?;
    let base = baseline_scores.aligned(specs)?;
    let mut improved = false;
    let mut regressed = false;
    for ((spec, c), b) in specs.iter().zip(&cand).zip(&base) {
        match spec
            .direction
            .oriented(*c)
            .partial_cmp(&spec.direction.oriented(*b))
        {
            Some(Ordering::Greater) => improved = true,
            Some(Ordering::Less) => regressed = true,
            Some(Ordering::Equal) => {}
            None => return Err(DomainError::NonFinite(spec.name.clone())),
        }
    }
    Ok(match (improved, regressed) {
        (true, false) => CandidateClass::Better,
        (false, true) => CandidateClass::Worse,
        (false, false) => CandidateClass::Equal,
        (true, true) => CandidateClass::Mixed,
    })
}

/// How the criteria of a dataset are folded into a single ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompositionRule {
    /// Compare key by key; earlier keys dominate.
    Lexicographic {
        keys: Vec<(String, Direction)>,
    },
    /// Product of the named (larger-is-better) criteria.
    Product {
        keys: Vec<String>,
    },
    Single {
        key: String,
    },
}

impl CompositionRule {
    pub fn keys(&self) -> Vec<&str> {
        match self {
            CompositionRule::Lexicographic { keys } => {
                keys.iter().map(|(k, _)| k.as_str()).collect()
            }
            CompositionRule::Product { keys } => keys.iter().map(String::as_str).collect(),
            CompositionRule::Single { key } => vec![key.as_str()],
        }
    }

    /// The same rule with every comparison flipped, used to pick the bottom of a set.
    pub fn reversed(&self) -> ReversibleRule<'_> {
        ReversibleRule {
            rule: self,
            reversed: true,
        }
    }

    pub fn check_against(&self, specs: &[CriterionSpec]) -> Result<(), DomainError> {
        for key in self.keys() {
            if !specs.iter().any(|s| s.name == key) {
                return Err(DomainError::UnknownCriterion(key.to_string()));
            }
        }
        Ok(())
    }

    /// Sort key components, larger first.
    fn oriented_key(&self, scores: &ScoreVector) -> Result<Vec<f64>, DomainError> {
        let fetch = |k: &str| {
            scores
                .get(k)
                .ok_or_else(|| DomainError::UnknownCriterion(k.to_string()))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(DomainError::NonFinite(k.to_string()))
                    }
                })
        };
        match self {
            CompositionRule::Lexicographic { keys } => keys
                .iter()
                .map(|(k, dir)| fetch(k).map(|v| dir.oriented(v)))
                .collect(),
            CompositionRule::Product { keys } => {
                let mut p = 1.0;
                for k in keys {
                    p *= fetch(k)?;
                }
                Ok(vec![p])
            }
            CompositionRule::Single { key } => Ok(vec![fetch(key)?]),
        }
    }
}

/// A borrowed rule that can be applied forwards or backwards.
#[derive(Debug, Clone, Copy)]
pub struct ReversibleRule<'a> {
    rule: &'a CompositionRule,
    reversed: bool,
}

impl<'a> From<&'a CompositionRule> for ReversibleRule<'a> {
    fn from(rule: &'a CompositionRule) -> Self {
        Self {
            rule,
            reversed: false,
        }
    }
}

fn compare_keys(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Orders candidate ids best-first under `rule`; ties keep input order.
pub fn rank_candidates<'a, Id: Clone>(
    candidates: &[(Id, ScoreVector)],
    rule: impl Into<ReversibleRule<'a>>,
) -> Result<Vec<Id>, DomainError> {
    Ok(rank_indices(candidates.iter().map(|(_, s)| s), rule)?
        .into_iter()
        .map(|i| candidates[i].0.clone())
        .collect())
}

/// Index form of [`rank_candidates`].
pub fn rank_indices<'s, 'a>(
    scores: impl IntoIterator<Item = &'s ScoreVector>,
    rule: impl Into<ReversibleRule<'a>>,
) -> Result<Vec<usize>, DomainError> {
    let rule = rule.into();
    let keys: Vec<Vec<f64>> = scores
        .into_iter()
        .map(|s| rule.rule.oriented_key(s))
        .collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..keys.len()).collect();
    // sort_by is stable, which gives the input-order tie break.
    order.sort_by(|&i, &j| {
        let o = compare_keys(&keys[j], &keys[i]);
        if rule.reversed {
            o.reverse()
        } else {
            o
        }
    });
    Ok(order)
}
