//! Question attribute ratings from judge templates, and the top-half minus
//! bottom-half impact of an attribute on an answer criterion.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{fan_out, BackendError, ChatHandle, GenerationRequest};

/// Placeholder each template carries for the question being rated.
pub const QUESTION_PLACEHOLDER: &str = "GIVEN QUESTION";

/// Fixed example question embedded in every template.
pub const TEMPLATE_EXAMPLE_QUESTION: &str =
    "Can you please provide detailed information on the oral medication options available for treating scabies?";

const RATING_MAX_TOKENS: u32 = 512;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("validation: {0}")]
    Validation(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    NonLeadingness,
    WordChoice,
    Tone,
    Conciseness,
    Neutrality,
    GrammarAndSpelling,
    Structure,
    Politeness,
    Clarity,
    Emotion,
}

impl Attribute {
    pub const ALL: [Attribute; 10] = [
        Attribute::NonLeadingness,
        Attribute::WordChoice,
        Attribute::Tone,
        Attribute::Conciseness,
        Attribute::Neutrality,
        Attribute::GrammarAndSpelling,
        Attribute::Structure,
        Attribute::Politeness,
        Attribute::Clarity,
        Attribute::Emotion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::NonLeadingness => "non_leadingness",
            Attribute::WordChoice => "word_choice",
            Attribute::Tone => "tone",
            Attribute::Conciseness => "conciseness",
            Attribute::Neutrality => "neutrality",
            Attribute::GrammarAndSpelling => "grammar_and_spelling",
            Attribute::Structure => "structure",
            Attribute::Politeness => "politeness",
            Attribute::Clarity => "clarity",
            Attribute::Emotion => "emotion",
        }
    }

    pub fn template(self) -> &'static str {
        match self {
            Attribute::NonLeadingness => include_str!("templates/non_leadingness.txt"),
            Attribute::WordChoice => include_str!("templates/word_choice.txt"),
            Attribute::Tone => include_str!("templates/tone.txt"),
            Attribute::Conciseness => include_str!("templates/conciseness.txt"),
            Attribute::Neutrality => include_str!("templates/neutrality.txt"),
            Attribute::GrammarAndSpelling => include_str!("templates/grammar_and_spelling.txt"),
            Attribute::Structure => include_str!("templates/structure.txt"),
            Attribute::Politeness => include_str!("templates/politeness.txt"),
            Attribute::Clarity => include_str!("templates/clarity.txt"),
            Attribute::Emotion => include_str!("templates/emotion.txt"),
        }
    }

    pub fn render(self, question: &str) -> String {
        self.template().replacen(QUESTION_PLACEHOLDER, question, 1)
    }

    /// Recognises a rendered template by its opening line.
    pub fn detect(prompt: &str) -> Option<Attribute> {
        let first = prompt.lines().next()?;
        Self::ALL
            .into_iter()
            .find(|a| a.template().lines().next() == Some(first))
    }
}

impl std::fmt::Display for Attribute {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub question_id: String,
    pub attribute: Attribute,
    pub score: u8,
}

fn leading_int(s: &str) -> Option<u8> {
    let digits: String = s.chars().take_while(|c| c.is_ascii_digit()).collect();
    match digits.parse::<u8>() {
        Ok(n @ 1..=5) if digits.len() == 1 => Some(n),
        _ => None,
    }
}

/// First integer after the "Rating" marker, or a leading bare integer.
/// Only 1 to 5 are accepted; anything else is `None`.
pub fn parse_rating(reply: &str) -> Option<u8> {
    let lower = reply.to_ascii_lowercase();
    match lower.find("rating") {
        Some(pos) => {
            let rest = &reply[pos + "rating".len()..];
            let start = rest.find(|c: char| c.is_alphanumeric())?;
            leading_int(&rest[start..])
        }
        None => leading_int(reply.trim_start()),
    }
}

fn rating_request(prompt: &str, attempt: u64) -> GenerationRequest {
    let mut req = GenerationRequest::greedy(prompt, RATING_MAX_TOKENS);
    if attempt > 0 {
        req.seed_hint = Some(attempt);
    }
    req
}

/// Renders and sends the template; an unparseable reply gets one retry and
/// then yields `None`.
pub fn score_attribute(
    question_id: &str,
    question: &str,
    attribute: Attribute,
    judge: &ChatHandle,
) -> Result<Option<AttributeScore>, AnalysisError> {
    if question.trim().is_empty() {
        return Err(AnalysisError::Validation("question text is empty".into()));
    }
    let prompt = attribute.render(question);
    for attempt in 0..2 {
        let reply = judge.complete(&rating_request(&prompt, attempt))?;
        if let Some(score) = parse_rating(&reply.text) {
            return Ok(Some(AttributeScore {
                question_id: question_id.to_string(),
                attribute,
                score,
            }));
        }
    }
    log::warn!("no rating for {question_id}/{attribute}");
    Ok(None)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttributeTable {
    pub scores: Vec<AttributeScore>,
    /// (question id, attribute) pairs without a usable rating.
    pub missing: Vec<(String, Attribute)>,
}

/// Rates every (question, attribute) combination, question-major.
pub fn score_questions(
    questions: &[(String, String)],
    judge: &ChatHandle,
) -> Result<AttributeTable, AnalysisError> {
    let jobs: Vec<(usize, Attribute)> = (0..questions.len())
        .flat_map(|q| Attribute::ALL.into_iter().map(move |a| (q, a)))
        .collect();
    let results = fan_out(jobs.len(), judge.limit.limit(), |i| {
        let (q, a) = jobs[i];
        score_attribute(&questions[q].0, &questions[q].1, a, judge)
    });
    let mut table = AttributeTable::default();
    for ((q, a), r) in jobs.into_iter().zip(results) {
        match r? {
            Some(s) => table.scores.push(s),
            None => table.missing.push((questions[q].0.clone(), a)),
        }
    }
    Ok(table)
}

/// Compensated sum, so means of repeated decimals round correctly.
fn accurate_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

/// Mean criterion of the top half by attribute score minus that of the
/// bottom half. Sorting is by score descending, ties by question id.
pub fn impact(
    attribute_scores: &[(String, f64)],
    criterion_values: &[(String, f64)],
) -> Result<f64, AnalysisError> {
    let bad = |m: String| Err(AnalysisError::Validation(m));
    if attribute_scores.len() < 2 {
        return bad("impact needs at least two questions".into());
    }
    if attribute_scores.len() % 2 != 0 {
        return bad(format!(
            "impact needs an even number of questions, got {}",
            attribute_scores.len()
        ));
    }
    if attribute_scores.len() != criterion_values.len() {
        return bad("attribute and criterion lists differ in length".into());
    }
    let mut crit: Vec<(&str, f64)> = criterion_values
        .iter()
        .map(|(id, v)| (id.as_str(), *v))
        .collect();
    crit.sort_by(|a, b| a.0.cmp(b.0));
    if crit.windows(2).any(|w| w[0].0 == w[1].0) {
        return bad("duplicate question id in criterion values".into());
    }
    let mut rows = Vec::with_capacity(attribute_scores.len());
    for (id, score) in attribute_scores {
        let Ok(i) = crit.binary_search_by(|c| c.0.cmp(id)) else {
            return bad(format!("no criterion value for question {id}"));
        };
        if !score.is_finite() || !crit[i].1.is_finite() {
            return bad(format!("non-finite value for question {id}"));
        }
        rows.push((id.as_str(), *score, crit[i].1));
    }
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n = rows.len() / 2;
    let top = accurate_sum(rows[..n].iter().map(|r| r.2)) / n as f64;
    let bottom = accurate_sum(rows[n..].iter().map(|r| r.2)) / n as f64;
    Ok(top - bottom)
}

/// Per-question attribute ratings with criterion values, tab-separated.
pub fn attribute_matrix_tsv(
    table: &AttributeTable,
    criteria: &[(String, Vec<(String, f64)>)],
) -> String {
    let mut out = String::from("question_id");
    for a in Attribute::ALL {
        write!(out, "\t{a}").unwrap();
    }
    for (name, _) in criteria {
        write!(out, "\t{name}").unwrap();
    }
    out.push('\n');
    let mut ids: Vec<&str> = table
        .scores
        .iter()
        .map(|s| s.question_id.as_str())
        .collect();
    ids.sort();
    ids.dedup();
    for id in ids {
        out.push_str(id);
        for a in Attribute::ALL {
            match table
                .scores
                .iter()
                .find(|s| s.question_id == id && s.attribute == a)
            {
                Some(s) => write!(out, "\t{}", s.score).unwrap(),
                None => out.push('\t'),
            }
        }
        for (_, vals) in criteria {
            match vals.iter().find(|(q, _)| q == id) {
                Some((_, v)) => write!(out, "\t{v}").unwrap(),
                None => out.push('\t'),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub attribute: Attribute,
    pub criterion: String,
    /// Questions with both a rating and a criterion value.
    pub questions: usize,
    pub impact: Option<f64>,
}

/// Impact of every attribute on every criterion over the questions rated for
/// that attribute. An odd leftover question (by id order) is dropped.
pub fn impact_table(
    table: &AttributeTable,
    criteria: &[(String, Vec<(String, f64)>)],
) -> Vec<ImpactRow> {
    let mut rows = Vec::new();
    for a in Attribute::ALL {
        for (name, vals) in criteria {
            let mut att: Vec<(String, f64)> = table
                .scores
                .iter()
                .filter(|s| s.attribute == a && vals.iter().any(|(q, _)| *q == s.question_id))
                .map(|s| (s.question_id.clone(), f64::from(s.score)))
                .collect();
            att.sort_by(|x, y| x.0.cmp(&y.0));
            if att.len() % 2 == 1 {
                att.pop();
            }
            let crit: Vec<(String, f64)> = vals
                .iter()
                .filter(|(q, _)| att.iter().any(|(id, _)| id == q))
                .cloned()
                .collect();
            rows.push(ImpactRow {
                attribute: a,
                criterion: name.clone(),
                questions: att.len(),
                impact: impact(&att, &crit).ok(),
            });
        }
    }
    rows
}

pub fn impact_tsv(rows: &[ImpactRow]) -> String {
    let mut out = String::from("attribute\tcriterion\tquestions\timpact\n");
    for r in rows {
        let v = r.impact.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.attribute, r.criterion, r.questions, v
        )
        .unwrap();
    }
    out
}
