use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{attribute_matrix_tsv, impact_table, impact_tsv, score_questions};
use crate::backend::fan_out;
use crate::criteria::{
    generate_answer, score_binary_judge, score_kqa, score_overall, score_reward, AnswerRecord,
    BinaryTarget, Decoding,
};
use crate::domain::{QuestionRecord, ScoreVector, Split};
use crate::dpo::{select_checkpoint, train, Checkpoint, DpoError};
use crate::pairing::{dataset_pairs, PreferencePair, QuestionCandidates, ScoredCandidate};
use crate::sampling::{render_rewrite_prompt, sample_rewrites, RewriteCandidate};
use crate::tinylm::{
    decode_tokens, encode_target, encode_text, fit_likelihood, sample_sequence, TinyLm, Token,
};

use super::artifacts as a;
use super::config::{BaselineMode, Preset};
use super::io::{read_json, read_jsonl, write_atomic, write_json, write_jsonl, FORMAT_VERSION};
use super::records::*;
use super::{Pipeline, PipelineError, Stage};

pub(super) struct Outcome {
    pub counts: BTreeMap<String, u64>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            counts: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn count(&mut self, key: &str, n: usize) {
        *self.counts.entry(key.into()).or_default() += n as u64;
    }
}

pub(super) fn run(p: &Pipeline, stage: Stage) -> Result<Outcome, PipelineError> {
    match stage {
        Stage::Rewrite => rewrite(p),
        Stage::Answer => answer(p),
        Stage::Score => score(p),
        Stage::Pair => pair(p),
        Stage::Export => export(p),
        Stage::Train => train_stage(p),
        Stage::Select => select(p),
        Stage::Evaluate => evaluate(p),
        Stage::Analyze => analyze(p),
        Stage::Report => report(p),
    }
}

const PAIR_SPLITS: [Split; 2] = [Split::Train, Split::Validation];

fn stage_err(stage: Stage, message: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage,
        message: message.to_string(),
    }
}

impl Pipeline {
    fn require(
        &self,
        artifact: &str,
        producer: Stage,
    ) -> Result<std::path::PathBuf, PipelineError> {
        let path = self.path(artifact);
        if path.exists() {
            Ok(path)
        } else {
            Err(PipelineError::MissingArtifact {
                path,
                stage: producer,
            })
        }
    }

    fn pair_questions(&self) -> impl Iterator<Item = &QuestionRecord> {
        self.questions
            .iter()
            .filter(|q| PAIR_SPLITS.contains(&q.split))
    }

    fn question(&self, id: &str) -> Option<&QuestionRecord> {
        self.questions.iter().find(|q| q.id == id)
    }

    fn workers(&self) -> usize {
        self.cfg.backends.max_in_flight
    }

    fn decoding(&self) -> Decoding {
        Decoding::greedy(self.cfg.evaluate.answer_max_tokens)
    }

    /// Answers `text` on behalf of `q`; an empty text becomes a failed record.
    fn answer_text(&self, text: &str) -> AnswerRecord {
        match generate_answer(text, &self.backends.answerer, self.decoding()) {
            Ok(r) => r,
            Err(e) => AnswerRecord {
                question_text_used: text.to_string(),
                answer_text: String::new(),
                generator_id: self.backends.answerer.id().to_string(),
                decoding: self.decoding(),
                failed: true,
                error: Some(e.to_string()),
            },
        }
    }

    /// Criterion values of one answer to `q`, in preset order.
    fn score_answer(
        &self,
        q: &QuestionRecord,
        answer: &AnswerRecord,
    ) -> Result<ScoreVector, String> {
        let specs = self.cfg.preset.specs();
        let values = match self.cfg.preset {
            Preset::Kqa => {
                let facts = q.must_have.as_deref().unwrap_or_default();
                let s =
                    score_kqa(answer, facts, &self.backends.judge).map_err(|e| e.to_string())?;
                vec![s.s_comp, f64::from(s.s_cont)]
            }
            Preset::Truthfulqa => {
                let fallback = self.cfg.evaluate.textual_fallback;
                let judge = |t| {
                    score_binary_judge(
                        &q.text,
                        &answer.answer_text,
                        &self.backends.judge,
                        t,
                        fallback,
                    )
                    .map_err(|e| e.to_string())
                };
                let truth = judge(BinaryTarget::Truthful)?;
                let info = judge(BinaryTarget::Informative)?;
                vec![
                    truth,
                    info,
                    score_overall(truth, info).map_err(|e| e.to_string())?,
                ]
            }
            Preset::Oasst1 | Preset::Synthetic => {
                let reward = self.backends.reward.as_ref().ok_or("no reward backend")?;
                let context = q.context.as_deref().unwrap_or(&q.text);
                vec![score_reward(context, &answer.answer_text, reward)
                    .map_err(|e| e.to_string())?]
            }
        };
        Ok(ScoreVector::from_specs(&specs, &values))
    }

    fn load_model(&self, artifact: &str, producer: Stage) -> Result<TinyLm, PipelineError> {
        let path = self.require(artifact, producer)?;
        TinyLm::load(&path).map_err(|e| stage_err(producer, format!("{}: {e}", path.display())))
    }
}

fn rewrite(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let mut out = Outcome::new();
    let mut lines = Vec::new();
    for q in p.pair_questions() {
        out.count("questions", 1);
        match sample_rewrites(q, &p.cfg.sampler, &p.backends.generator) {
            Ok(run) => {
                out.count("attempts", run.attempts);
                out.count("rewrites", run.candidates.len());
                if run.candidates.len() < p.cfg.sampler.k_unique {
                    out.count("questions_short", 1);
                }
                lines.extend(run.candidates.into_iter().map(|c| RewriteLine {
                    question_id: q.id.clone(),
                    split: q.split,
                    text: c.text,
                    draw_index: c.draw_index,
                }));
            }
            Err(e) => out
                .warnings
                .push(format!("question {}: no rewrites ({e})", q.id)),
        }
    }
    write_jsonl(&p.path(a::REWRITES), &lines)?;
    Ok(out)
}

fn answer(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let rewrites: Vec<RewriteLine> = read_jsonl(&p.require(a::REWRITES, Stage::Rewrite)?)?;
    let mut by_question: HashMap<&str, Vec<&RewriteLine>> = HashMap::new();
    for r in &rewrites {
        by_question
            .entry(r.question_id.as_str())
            .or_default()
            .push(r);
    }
    let mut jobs: Vec<(&QuestionRecord, Source, Option<u64>, &str)> = Vec::new();
    for q in p.pair_questions() {
        jobs.push((q, Source::Original, None, q.text.as_str()));
        for r in by_question.get(q.id.as_str()).into_iter().flatten() {
            jobs.push((q, Source::Rewrite, Some(r.draw_index), r.text.as_str()));
        }
    }
    let lines: Vec<AnswerLine> = fan_out(jobs.len(), p.workers(), |i| {
        let (q, source, draw_index, text) = jobs[i];
        AnswerLine {
            question_id: q.id.clone(),
            split: q.split,
            source,
            draw_index,
            answer: p.answer_text(text),
        }
    });
    let mut out = Outcome::new();
    out.count("answers", lines.len());
    for l in lines.iter().filter(|l| l.answer.failed) {
        out.count("failed", 1);
        out.warnings.push(format!(
            "question {} ({}): answer failed: {}",
            l.question_id,
            l.source.as_str(),
            l.answer.error.as_deref().unwrap_or("unknown error")
        ));
    }
    write_jsonl(&p.path(a::ANSWERS), &lines)?;
    Ok(out)
}

fn score(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let answers: Vec<AnswerLine> = read_jsonl(&p.require(a::ANSWERS, Stage::Answer)?)?;
    let results: Vec<Option<Result<ScoreVector, String>>> =
        fan_out(answers.len(), p.workers(), |i| {
            let l = &answers[i];
            if l.answer.failed {
                return None;
            }
            Some(match p.question(&l.question_id) {
                Some(q) => p.score_answer(q, &l.answer),
                None => Err(format!("unknown question id {}", l.question_id)),
            })
        });
    let mut out = Outcome::new();
    let mut lines = Vec::new();
    for (l, r) in answers.iter().zip(results) {
        match r {
            None => out.count("excluded_failed_answer", 1),
            Some(Err(e)) => {
                out.count("excluded_scoring_error", 1);
                out.warnings.push(format!(
                    "question {} ({}): scoring failed: {e}",
                    l.question_id,
                    l.source.as_str()
                ));
            }
            Some(Ok(scores)) => lines.push(ScoreLine {
                question_id: l.question_id.clone(),
                split: l.split,
                source: l.source,
                draw_index: l.draw_index,
                text: l.answer.question_text_used.clone(),
                scores,
            }),
        }
    }
    out.count("scored", lines.len());
    write_jsonl(&p.path(a::SCORES), &lines)?;
    Ok(out)
}

fn pair(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let scores: Vec<ScoreLine> = read_jsonl(&p.require(a::SCORES, Stage::Score)?)?;
    let specs = p.cfg.preset.specs();
    let rule = p.cfg.preset.rule();
    let pcfg = p.cfg.pairing_config();
    let mut out = Outcome::new();
    let mut stats_lines = Vec::new();
    for split in PAIR_SPLITS {
        let mut items = Vec::new();
        for q in p.questions.iter().filter(|q| q.split == split) {
            let mine: Vec<&ScoreLine> = scores.iter().filter(|s| s.question_id == q.id).collect();
            let Some(baseline) = mine.iter().find(|s| s.source == Source::Original) else {
                out.warnings
                    .push(format!("question {}: original has no score; skipped", q.id));
                continue;
            };
            let mut candidates: Vec<ScoredCandidate> = mine
                .iter()
                .filter(|s| s.source == Source::Rewrite)
                .map(|s| ScoredCandidate {
                    candidate: RewriteCandidate {
                        parent_id: q.id.clone(),
                        text: s.text.clone(),
                        draw_index: s.draw_index.unwrap_or(0),
                    },
                    scores: s.scores.clone(),
                })
                .collect();
            candidates.sort_by_key(|c| c.candidate.draw_index);
            items.push(QuestionCandidates {
                question: q.clone(),
                baseline: baseline.scores.clone(),
                candidates,
            });
        }
        let (pairs, stats) =
            dataset_pairs(&items, &specs, &pcfg, &rule).map_err(|e| stage_err(Stage::Pair, e))?;
        out.count(&format!("pairs_{}", split.as_str()), pairs.len());
        out.count("pairs", pairs.len());
        out.count(&format!("questions_{}", split.as_str()), stats.len());
        out.count(
            &format!("questions_without_pairs_{}", split.as_str()),
            stats.iter().filter(|s| s.n_pairs == 0).count(),
        );
        stats_lines.extend(stats.into_iter().map(|s| PairStatsLine {
            split,
            question_id: s.question_id,
            n_plus_available: s.n_plus_available,
            n_minus_available: s.n_minus_available,
            n_pairs: s.n_pairs,
        }));
        let artifact = if split == Split::Train {
            a::PAIRS_TRAIN
        } else {
            a::PAIRS_VALIDATION
        };
        write_jsonl(&p.path(artifact), &pairs)?;
    }
    write_jsonl(&p.path(a::PAIR_STATS), &stats_lines)?;
    Ok(out)
}

fn read_pairs(p: &Pipeline) -> Result<(Vec<PreferencePair>, Vec<PreferencePair>), PipelineError> {
    let train = read_jsonl(&p.require(a::PAIRS_TRAIN, Stage::Pair)?)?;
    let val = read_jsonl(&p.require(a::PAIRS_VALIDATION, Stage::Pair)?)?;
    Ok((train, val))
}

fn export(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let (train, val) = read_pairs(p)?;
    let mut out = Outcome::new();
    for (pairs, artifact, key) in [
        (&train, a::EXPORT_TRAIN, "train"),
        (&val, a::EXPORT_VALIDATION, "validation"),
    ] {
        let lines: Vec<ExportLine> = pairs
            .iter()
            .map(|pp| ExportLine {
                prompt: pp.prompt.clone(),
                chosen: pp.chosen.clone(),
                rejected: pp.rejected.clone(),
            })
            .collect();
        out.count(key, lines.len());
        write_jsonl(&p.path(artifact), &lines)?;
    }
    Ok(out)
}

fn checkpoint_file(step: usize) -> String {
    format!("checkpoints/step-{step:06}.ckpt")
}

fn save_model(p: &Pipeline, model: &TinyLm, artifact: &str) -> Result<String, PipelineError> {
    let bytes = model.to_bytes();
    write_atomic(&p.path(artifact), &bytes)?;
    Ok(model.checksum())
}

fn train_stage(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let (train_pairs, val_pairs) = read_pairs(p)?;
    let mut out = Outcome::new();
    let (init, warm_start) = match &p.cfg.model.init_checkpoint {
        Some(path) => {
            let m = TinyLm::load(path)
                .map_err(|e| stage_err(Stage::Train, format!("{}: {e}", path.display())))?;
            (m, None)
        }
        None => {
            let rewrites: Vec<RewriteLine> = read_jsonl(&p.require(a::REWRITES, Stage::Rewrite)?)?;
            let seqs: Vec<(Vec<Token>, Vec<Token>)> = rewrites
                .iter()
                .filter(|r| r.split == Split::Train)
                .filter_map(|r| {
                    let q = p.question(&r.question_id)?;
                    let prompt = render_rewrite_prompt(&q.text).ok()?;
                    Some((encode_text(&prompt), encode_target(&r.text)))
                })
                .collect();
            out.count("warm_start_sequences", seqs.len());
            let mut m = TinyLm::random(p.cfg.model.tinylm, p.cfg.seed, p.cfg.model.init_scale)
                .map_err(|e| stage_err(Stage::Train, e))?;
            let report = fit_likelihood(&mut m, &seqs, &p.cfg.fit_config())
                .map_err(|e| stage_err(Stage::Train, e))?;
            (m, Some(report))
        }
    };
    let initial_checksum = save_model(p, &init, a::INITIAL_MODEL)?;
    let outcome = match train(&train_pairs, &val_pairs, &init, &p.cfg.train_config()) {
        Ok(o) => o,
        Err(DpoError::Diverged { step, last_good }) => {
            let file = checkpoint_file(last_good.step);
            save_model(p, &last_good.model, &file)?;
            return Err(stage_err(
                Stage::Train,
                format!("training diverged at step {step}; last good checkpoint saved as {file}"),
            ));
        }
        Err(e) => return Err(stage_err(Stage::Train, e)),
    };
    let mut lines = Vec::new();
    for c in &outcome.checkpoints {
        let file = checkpoint_file(c.step);
        let checksum = save_model(p, &c.model, &file)?;
        lines.push(CheckpointLine {
            step: c.step,
            file,
            checksum,
            validation_ps: c.validation_ps,
        });
    }
    write_jsonl(&p.path(a::CHECKPOINTS), &lines)?;
    write_jsonl(&p.path(a::TRAIN_LOG), &outcome.log)?;
    let summary = TrainSummary {
        pairs_train: train_pairs.len(),
        pairs_validation: val_pairs.len(),
        initial_checksum,
        warm_start,
        initial_loss: outcome.initial_loss,
        epoch_mean_loss: outcome.epoch_mean_loss.clone(),
        final_eval_loss: outcome.final_eval_loss,
        final_checksum: outcome.model.checksum(),
    };
    write_json(&p.path(a::TRAIN_SUMMARY), &summary)?;
    out.count("pairs_train", train_pairs.len());
    out.count("pairs_validation", val_pairs.len());
    out.count(
        "steps",
        outcome
            .log
            .iter()
            .filter(|r| r.train_loss.is_some())
            .count(),
    );
    out.count("checkpoints", lines.len());
    Ok(out)
}

fn select(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let lines: Vec<CheckpointLine> = read_jsonl(&p.require(a::CHECKPOINTS, Stage::Train)?)?;
    let mut checkpoints = Vec::with_capacity(lines.len());
    for l in &lines {
        checkpoints.push(Checkpoint {
            step: l.step,
            model: p.load_model(&l.file, Stage::Train)?,
            validation_ps: l.validation_ps,
        });
    }
    let best = select_checkpoint(&checkpoints).map_err(|e| stage_err(Stage::Select, e))?;
    let checksum = save_model(p, &best.model, a::REWRITER_MODEL)?;
    write_json(
        &p.path(a::SELECTED),
        &SelectedCheckpoint {
            v: FORMAT_VERSION,
            step: best.step,
            validation_ps: best.validation_ps,
            checksum,
        },
    )?;
    let mut out = Outcome::new();
    out.count("candidates", checkpoints.len());
    out.count("selected_step", best.step);
    Ok(out)
}

/// Greedy decode of the rewrite prompt; `None` when the decode is blank.
fn decode_rewrite(
    model: &TinyLm,
    question: &str,
    max_tokens: usize,
) -> Result<Option<String>, PipelineError> {
    let prompt = render_rewrite_prompt(question).map_err(|e| stage_err(Stage::Evaluate, e))?;
    // Greedy decoding never draws from the generator.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let tokens = sample_sequence(model, &encode_text(&prompt), 1.0, 0.0, max_tokens, &mut rng)
        .map_err(|e| stage_err(Stage::Evaluate, e))?;
    let text = decode_tokens(&tokens).trim().to_string();
    Ok((!text.is_empty()).then_some(text))
}

pub(super) fn evaluate_split(p: &Pipeline, split: Split) -> Result<Evaluation, PipelineError> {
    let questions: Vec<&QuestionRecord> = p.questions.iter().filter(|q| q.split == split).collect();
    if questions.is_empty() {
        return Err(stage_err(
            Stage::Evaluate,
            format!("no {} questions", split.as_str()),
        ));
    }
    let mut systems: Vec<(Source, Vec<(String, bool)>)> = Vec::new();
    if p.cfg.evaluate.baseline != BaselineMode::None {
        systems.push((
            Source::Original,
            questions.iter().map(|q| (q.text.clone(), false)).collect(),
        ));
    }
    if p.cfg.evaluate.baseline == BaselineMode::ZeroShotCot {
        let trigger = p.cfg.evaluate.cot_trigger.trim();
        systems.push((
            Source::ZeroShotCot,
            questions
                .iter()
                .map(|q| (format!("{} {trigger}", q.text), false))
                .collect(),
        ));
    }
    for (system, artifact) in [
        (Source::InitialRewriter, a::INITIAL_MODEL),
        (Source::Rewriter, a::REWRITER_MODEL),
    ] {
        if !p.path(artifact).exists() {
            continue;
        }
        let model = p.load_model(artifact, Stage::Train)?;
        let texts = fan_out(questions.len(), num_threads(), |i| {
            decode_rewrite(&model, &questions[i].text, p.cfg.model.decode_max_tokens)
        });
        let mut decoded = Vec::with_capacity(texts.len());
        for (q, t) in questions.iter().zip(texts) {
            decoded.push(match t? {
                Some(text) => (text, false),
                None => (q.text.clone(), true),
            });
        }
        systems.push((system, decoded));
    }
    if systems.is_empty() {
        return Err(PipelineError::MissingArtifact {
            path: p.path(a::REWRITER_MODEL),
            stage: Stage::Select,
        });
    }

    let specs = p.cfg.preset.specs();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (system, texts) in systems {
        let scored: Vec<Result<ScoreVector, String>> = fan_out(questions.len(), p.workers(), |i| {
            let answer = p.answer_text(&texts[i].0);
            if answer.failed {
                return Err(format!(
                    "answer failed: {}",
                    answer.error.unwrap_or_default()
                ));
            }
            p.score_answer(questions[i], &answer)
        });
        let mut sums = vec![0.0; specs.len()];
        let mut n_scored = 0;
        let mut fallbacks = 0;
        for ((q, (text, fallback)), result) in questions.iter().zip(texts).zip(scored) {
            fallbacks += usize::from(fallback);
            let (scores, error) = match result {
                Ok(s) => {
                    n_scored += 1;
                    for (sum, spec) in sums.iter_mut().zip(&specs) {
                        *sum += s.get(&spec.name).unwrap_or(0.0);
                    }
                    (Some(s), None)
                }
                Err(e) => (None, Some(e)),
            };
            rows.push(EvalRow {
                system,
                question_id: q.id.clone(),
                text,
                fallback,
                scores,
                error,
            });
        }
        let means = specs
            .iter()
            .zip(&sums)
            .filter(|_| n_scored > 0)
            .map(|(s, sum)| (s.name.clone(), sum / n_scored as f64))
            .collect();
        summaries.push(SystemSummary {
            system,
            questions: questions.len(),
            scored: n_scored,
            excluded: questions.len() - n_scored,
            fallbacks,
            means,
        });
    }
    Ok(Evaluation {
        split,
        rows,
        summaries,
    })
}

fn num_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn evaluation_tsv(eval: &Evaluation, criteria: &[String]) -> String {
    let mut out = String::from("system\tquestions\tscored\texcluded\tfallbacks");
    for c in criteria {
        write!(out, "\t{c}").unwrap();
    }
    out.push('\n');
    for s in &eval.summaries {
        write!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            s.system.as_str(),
            s.questions,
            s.scored,
            s.excluded,
            s.fallbacks
        )
        .unwrap();
        for c in criteria {
            match s.mean(c) {
                Some(v) => write!(out, "\t{v:.6}").unwrap(),
                None => out.push('\t'),
            }
        }
        out.push('\n');
    }
    out
}

fn criterion_names(p: &Pipeline) -> Vec<String> {
    p.cfg.preset.specs().into_iter().map(|s| s.name).collect()
}

fn evaluate(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let eval = evaluate_split(p, p.cfg.evaluate.split)?;
    let mut out = Outcome::new();
    for s in &eval.summaries {
        out.count(&format!("{}_scored", s.system.as_str()), s.scored);
        if s.excluded > 0 {
            out.count(&format!("{}_excluded", s.system.as_str()), s.excluded);
            out.warnings.push(format!(
                "{}: {} questions excluded from the means",
                s.system.as_str(),
                s.excluded
            ));
        }
        if s.fallbacks > 0 {
            out.count(&format!("{}_fallbacks", s.system.as_str()), s.fallbacks);
        }
    }
    write_jsonl(&p.path(a::EVALUATION), &eval.rows)?;
    write_jsonl(&p.path(a::EVALUATION_SUMMARY), &eval.summaries)?;
    write_atomic(
        &p.path(a::EVALUATION_TSV),
        evaluation_tsv(&eval, &criterion_names(p)).as_bytes(),
    )?;
    Ok(out)
}

fn analyze(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let rows: Vec<EvalRow> = read_jsonl(&p.require(a::EVALUATION, Stage::Evaluate)?)?;
    let wanted = [Source::Original, Source::Rewriter];
    let mut picked: Vec<&EvalRow> = rows.iter().filter(|r| wanted.contains(&r.system)).collect();
    if picked.is_empty() {
        picked = rows.iter().collect();
    }
    let id = |r: &EvalRow| format!("{}/{}", r.system.as_str(), r.question_id);
    let questions: Vec<(String, String)> = picked.iter().map(|r| (id(r), r.text.clone())).collect();
    let table =
        score_questions(&questions, &p.backends.judge).map_err(|e| stage_err(Stage::Analyze, e))?;
    let criteria: Vec<(String, Vec<(String, f64)>)> = criterion_names(p)
        .into_iter()
        .map(|name| {
            let vals = picked
                .iter()
                .filter_map(|r| Some((id(r), r.scores.as_ref()?.get(&name)?)))
                .collect();
            (name, vals)
        })
        .collect();
    let impacts = impact_table(&table, &criteria);
    write_jsonl(&p.path(a::ATTRIBUTES), &table.scores)?;
    write_atomic(
        &p.path(a::ATTRIBUTE_MATRIX),
        attribute_matrix_tsv(&table, &criteria).as_bytes(),
    )?;
    write_atomic(&p.path(a::IMPACT), impact_tsv(&impacts).as_bytes())?;
    let mut out = Outcome::new();
    out.count("questions", questions.len());
    out.count("ratings", table.scores.len());
    out.count("missing_ratings", table.missing.len());
    for (q, attr) in &table.missing {
        out.warnings.push(format!("{q}: no {attr} rating"));
    }
    Ok(out)
}

fn read_optional_json<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Option<T>, PipelineError> {
    if path.exists() {
        read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

fn report(p: &Pipeline) -> Result<Outcome, PipelineError> {
    let summaries: Vec<SystemSummary> =
        read_jsonl(&p.require(a::EVALUATION_SUMMARY, Stage::Evaluate)?)?;
    let train: Option<TrainSummary> = read_optional_json(&p.path(a::TRAIN_SUMMARY))?;
    let selected: Option<SelectedCheckpoint> = read_optional_json(&p.path(a::SELECTED))?;
    let criteria = criterion_names(p);

    let mut header = vec![
        "system".to_string(),
        "scored".into(),
        "excluded".into(),
        "fallbacks".into(),
    ];
    header.extend(criteria.iter().cloned());
    let mut table = vec![header];
    for s in &summaries {
        let mut row = vec![
            s.system.as_str().to_string(),
            s.scored.to_string(),
            s.excluded.to_string(),
            s.fallbacks.to_string(),
        ];
        row.extend(criteria.iter().map(|c| {
            s.mean(c)
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into())
        }));
        table.push(row);
    }

    let mut tsv = String::new();
    for row in &table {
        tsv.push_str(&row.join("\t"));
        tsv.push('\n');
    }

    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut txt = format!(
        "preset {} seed {} split {}\n\n",
        p.cfg.preset.as_str(),
        p.cfg.seed,
        p.cfg.evaluate.split.as_str()
    );
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| {
                if i == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        txt.push_str(cells.join("  ").trim_end());
        txt.push('\n');
    }
    if let Some(t) = &train {
        txt.push('\n');
        writeln!(
            txt,
            "training pairs {} validation pairs {}",
            t.pairs_train, t.pairs_validation
        )
        .unwrap();
        let epochs: Vec<String> = t
            .epoch_mean_loss
            .iter()
            .map(|l| format!("{l:.4}"))
            .collect();
        writeln!(
            txt,
            "loss initial {:.4} epochs [{}] final {:.4}",
            t.initial_loss,
            epochs.join(", "),
            t.final_eval_loss
        )
        .unwrap();
    }
    if let Some(s) = &selected {
        writeln!(
            txt,
            "selected step {} validation preference score {:.4}",
            s.step, s.validation_ps
        )
        .unwrap();
    }
    write_atomic(&p.path(a::REPORT_TXT), txt.as_bytes())?;
    write_atomic(&p.path(a::REPORT_TSV), tsv.as_bytes())?;
    let mut out = Outcome::new();
    out.count("systems", summaries.len());
    Ok(out)
}
