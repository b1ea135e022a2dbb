//! A closed toy world for exercising the whole pipeline offline.
//!
//! Questions ask about one or two aspects (symptoms, causes, ...) of a
//! condition. The scripted answerer writes one "About <aspect>:" paragraph
//! per aspect named in the question it receives, and the scripted reward is
//! the fraction of the six aspects the answer covers. A rewrite that names
//! more aspects therefore earns a higher score than the original.
//!
//! One chat backend plays every role by recognising the prompt: rewriter,
//! answerer, fact judge, yes/no judge and attribute judge.

use std::sync::OnceLock;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::analysis::{Attribute, TEMPLATE_EXAMPLE_QUESTION};
use crate::backend::mock::{MockReply, ScriptedChat, ScriptedReward};
use crate::backend::{GenerationRequest, TokenLogprob, TopLogprob};
use crate::domain::QuestionRecord;
use crate::sampling::{PROMPT_SEPARATOR, REWRITE_INSTRUCTION};

pub const ASPECTS: [&str; 6] = [
    "symptoms",
    "causes",
    "treatment",
    "risks",
    "prevention",
    "diagnosis",
];

/// Name of the criterion the synthetic reward produces.
pub const CRITERION: &str = "s_syn";

pub const CHAT_ID: &str = "synthetic-world";
pub const REWARD_ID: &str = "synthetic-reward";

const FIXTURE: &str = include_str!("../fixtures/synthetic/questions.jsonl");

const LEADS: [&str; 4] = ["What are the", "Explain the", "Describe the", "List the"];

/// The bundled 101/50/50 question set.
pub fn fixture_questions() -> &'static [QuestionRecord] {
    static CELL: OnceLock<Vec<QuestionRecord>> = OnceLock::new();
    CELL.get_or_init(|| {
        FIXTURE
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).expect("bundled fixture parses"))
            .collect()
    })
}

pub fn fixture_jsonl() -> &'static str {
    FIXTURE
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
}

/// Distinct aspects named as whole words, in order of first mention.
pub fn aspects_in(text: &str) -> Vec<&'static str> {
    let mut out = Vec::new();
    for w in words(text) {
        if let Some(a) = ASPECTS.iter().find(|a| **a == w) {
            if !out.contains(a) {
                out.push(*a);
            }
        }
    }
    out
}

/// Answer the scripted answerer gives to `question`.
pub fn answer_for(question: &str) -> String {
    let aspects = aspects_in(question);
    if aspects.is_empty() {
        return "It depends on the situation.".into();
    }
    aspects
        .iter()
        .map(|a| format!("About {a}: here is what is known."))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fraction of the aspects an answer covers with an "About <aspect>:" section.
pub fn coverage_score(answer: &str) -> f64 {
    let covered = ASPECTS
        .iter()
        .filter(|a| answer.contains(&format!("About {a}:")))
        .count();
    covered as f64 / ASPECTS.len() as f64
}

fn seeded(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn topic_of(question: &str) -> &str {
    let q = question.trim().trim_end_matches(['?', '.']);
    match q.rfind(" of ") {
        Some(i) => &q[i + 4..],
        None => q,
    }
}

fn join_list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// One draw of the scripted rewriter: a random lead, zero to four aspects
/// and the original topic.
pub fn rewrite_for(question: &str, draw: u64) -> String {
    let mut rng = seeded(&[b"rewrite", question.as_bytes(), &draw.to_le_bytes()]);
    let lead = LEADS[rng.random_range(0..LEADS.len())];
    let n = rng.random_range(0..=4);
    let picked: Vec<&str> = sample(&mut rng, ASPECTS.len(), n)
        .into_iter()
        .map(|i| ASPECTS[i])
        .collect();
    let topic = topic_of(question);
    if picked.is_empty() {
        format!("Tell me about {topic}?")
    } else {
        format!("{lead} {} of {topic}?", join_list(&picked))
    }
}

fn section<'a>(prompt: &'a str, header: &str, next: &str) -> Option<&'a str> {
    let start = prompt.find(header)? + header.len();
    let rest = &prompt[start..];
    Some(rest.find(next).map_or(rest, |e| &rest[..e]))
}

fn fact_verdict(prompt: &str) -> Option<&'static str> {
    let answer = section(prompt, "Answer:\n", "\n\nFact:\n")?;
    let fact = section(prompt, "\n\nFact:\n", "\n\n")?
        .trim()
        .to_ascii_lowercase();
    if answer.to_ascii_lowercase().contains(&format!("not {fact}")) {
        Some("CONTRADICTS")
    } else if answer.contains(&format!("About {fact}:")) {
        Some("ENTAILS")
    } else {
        Some("NEUTRAL")
    }
}

fn yes_no_reply(p_yes: f64) -> MockReply {
    let (yes, no) = (p_yes.ln(), (1.0 - p_yes).ln());
    let token = if p_yes >= 0.5 {
        ("Yes", yes)
    } else {
        ("No", no)
    };
    MockReply {
        text: token.0.into(),
        logprobs: Some(vec![TokenLogprob {
            token: token.0.into(),
            logprob: token.1,
            top: vec![
                TopLogprob {
                    token: "Yes".into(),
                    logprob: yes,
                },
                TopLogprob {
                    token: "No".into(),
                    logprob: no,
                },
            ],
        }]),
    }
}

/// The question a rendered attribute template is asking about.
fn rated_question(prompt: &str) -> Option<&str> {
    prompt
        .lines()
        .filter_map(|l| l.strip_prefix("**Question:** "))
        .find(|q| *q != TEMPLATE_EXAMPLE_QUESTION)
}

/// Deterministic 1 to 5 rating from surface features of the question.
pub fn attribute_rating(attribute: Attribute, question: &str) -> u8 {
    let n_words = words(question).count();
    let n_aspects = aspects_in(question).len();
    let capitalised = question.starts_with(|c: char| c.is_ascii_uppercase());
    let ends_q = question.trim_end().ends_with('?');
    let r = match attribute {
        Attribute::Conciseness => 5 - (n_words / 4).min(4),
        Attribute::Clarity => 1 + n_aspects.min(2) + usize::from(ends_q) + usize::from(capitalised),
        Attribute::Structure => {
            2 + usize::from(ends_q) + usize::from(capitalised) + usize::from(n_aspects > 1)
        }
        Attribute::GrammarAndSpelling => 3 + usize::from(ends_q) + usize::from(capitalised),
        Attribute::Politeness => {
            if question.to_ascii_lowercase().contains("please") {
                5
            } else {
                3
            }
        }
        Attribute::WordChoice => 2 + n_aspects.min(3),
        Attribute::Tone => {
            3 + usize::from(capitalised) + usize::from(!question.starts_with("what about"))
        }
        Attribute::NonLeadingness => 4,
        Attribute::Neutrality => 5,
        Attribute::Emotion => 5 - usize::from(question.contains('!')),
    };
    r.clamp(1, 5) as u8
}

fn reply(req: &GenerationRequest) -> MockReply {
    let prompt = req.prompt();
    let rewrite_head = format!("{REWRITE_INSTRUCTION}{PROMPT_SEPARATOR}");
    if let Some(question) = prompt.strip_prefix(&rewrite_head) {
        return MockReply::text(rewrite_for(question, req.seed_hint.unwrap_or(0)));
    }
    if let Some(a) = Attribute::detect(prompt) {
        let q = rated_question(prompt).unwrap_or("");
        return MockReply::text(format!(
            "Rating: {} points\nReasoning: scripted.",
            attribute_rating(a, q)
        ));
    }
    if prompt.starts_with("Decide whether the answer below entails the fact") {
        if let Some(v) = fact_verdict(prompt) {
            return MockReply::text(v);
        }
    }
    if prompt.contains(" Reply with yes or no.\n") {
        let answer = section(prompt, "\nA: ", "\n").unwrap_or("");
        let covered = aspects_in(answer).len() as f64;
        let p_yes = if prompt.ends_with("True:") {
            if answer.to_ascii_lowercase().contains("not ") {
                0.2
            } else {
                0.8
            }
        } else {
            (0.15 + 0.12 * covered).min(0.95)
        };
        return yes_no_reply(p_yes);
    }
    MockReply::text(answer_for(prompt))
}

/// Chat backend answering every prompt kind the pipeline sends.
pub fn world_chat() -> ScriptedChat {
    ScriptedChat::from_fn(CHAT_ID, |req| Ok(reply(req)))
}

/// Reward backend returning [`coverage_score`] of the answer.
pub fn world_reward() -> ScriptedReward {
    ScriptedReward::from_fn(REWARD_ID, |_, answer| Ok(coverage_score(answer)))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::backend::ChatBackend;
    use crate::criteria::{render_binary_prompt, render_fact_prompt, BinaryTarget};
    use crate::domain::{validate_dataset, Split};
    use crate::sampling::render_rewrite_prompt;

    #[test]
    fn fixture_shape() {
        let qs = fixture_questions();
        validate_dataset(qs).unwrap();
        let count = |s| qs.iter().filter(|q| q.split == s).count();
        assert_eq!(
            (
                count(Split::Train),
                count(Split::Validation),
                count(Split::Test)
            ),
            (101, 50, 50)
        );
        assert!(qs
            .iter()
            .all(|q| (1..=2).contains(&aspects_in(&q.text).len())));
    }

    #[test]
    fn answers_and_reward() {
        let a = answer_for("What are the symptoms and causes of flu?");
        assert_eq!(coverage_score(&a), 2.0 / 6.0);
        assert_eq!(coverage_score(&answer_for("Tell me about flu?")), 0.0);
        assert_eq!(
            aspects_in("Symptoms, causes, symptoms"),
            ["symptoms", "causes"]
        );
        assert!(aspects_in("symptomsx").is_empty());
    }

    #[test]
    fn rewrites_vary_and_keep_topic() {
        let q = "What are the causes of lyme disease?";
        let texts: HashSet<_> = (1..=300).map(|d| rewrite_for(q, d)).collect();
        assert!(texts.len() > 100, "{}", texts.len());
        assert!(texts
            .iter()
            .all(|t| t.ends_with("of lyme disease?") || t == "Tell me about lyme disease?"));
        assert_eq!(rewrite_for(q, 5), rewrite_for(q, 5));
    }

    #[test]
    fn dispatches_by_prompt() {
        let chat = world_chat();
        let ask = |p: String| {
            chat.complete(&GenerationRequest::greedy(p, 16))
                .unwrap()
                .text
        };
        let mut req = GenerationRequest::greedy(
            render_rewrite_prompt("What are the risks of gout?").unwrap(),
            64,
        );
        req.seed_hint = Some(3);
        assert_eq!(
            chat.complete(&req).unwrap().text,
            rewrite_for("What are the risks of gout?", 3)
        );
        assert_eq!(
            ask("What are the risks of gout?".into()),
            "About risks: here is what is known."
        );
        let ans = answer_for("risks of gout");
        assert_eq!(ask(render_fact_prompt(&ans, "risks")), "ENTAILS");
        assert_eq!(ask(render_fact_prompt(&ans, "causes")), "NEUTRAL");
        assert_eq!(
            ask(render_fact_prompt("It is not risks at all.", "risks")),
            "CONTRADICTS"
        );
        let r = ask(Attribute::Conciseness.render("Why?"));
        assert!(r.starts_with("Rating: 5"), "{r}");
        let mut req = GenerationRequest::greedy(
            render_binary_prompt("q", &ans, BinaryTarget::Informative),
            1,
        );
        req.want_logprobs = true;
        let lp = chat.complete(&req).unwrap().token_logprobs.unwrap();
        assert_eq!(lp[0].top.len(), 2);
    }

    #[test]
    fn rated_question_skips_the_example() {
        for a in Attribute::ALL {
            assert_eq!(
                rated_question(&a.render("Is it bad?")),
                Some("Is it bad?"),
                "{a}"
            );
        }
    }
}
