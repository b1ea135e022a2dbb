//! Direct preference optimisation of a [`TinyLm`] rewriter and
//! checkpoint selection by validation preference score.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pairing::PreferencePair;
use crate::tinylm::{encode_target, encode_text, Dropout, MeanKind, TinyLm, TinyLmError, Token};

#[derive(Debug, Error)]
pub enum DpoError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("non-finite loss at step {step}; last good checkpoint is step {}", last_good.step)]
    Diverged {
        step: usize,
        last_good: Box<Checkpoint>,
    },
    #[error(transparent)]
    Model(#[from] TinyLmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub train_batch: usize,
    pub eval_batch: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    /// Steps between snapshots; `None` means a ceiling of one eighth of the batches per epoch.
    pub checkpoint_every: Option<usize>,
    pub seed: u64,
    pub mean: MeanKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            learning_rate: 1e-2,
            train_batch: 32,
            eval_batch: 64,
            epochs: 1,
            dropout_rate: 0.8,
            checkpoint_every: None,
            seed: 0,
            mean: MeanKind::Arithmetic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DpoError> {
        let bad = |m: &str| Err(DpoError::Validation(m.into()));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.train_batch == 0 || self.eval_batch == 0 || self.epochs == 0 {
            return bad("batch sizes and epochs must be positive");
        }
        if self.checkpoint_every == Some(0) {
            return bad("checkpoint_every must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub model: TinyLm,
    pub validation_ps: f64,
}

fn check_prob(p: f64, what: &str) -> Result<f64, DpoError> {
    if p > 0.0 && p <= 1.0 {
        Ok(p.ln())
    } else {
        Err(DpoError::Numerical(format!(
            "{what} probability {p} outside (0, 1]"
        )))
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Preference margin from log mean probabilities.
fn margin(lc: f64, l0c: f64, lr: f64, l0r: f64, beta: f64) -> f64 {
    beta * ((lc - l0c) - (lr - l0r))
}

/// `-ln sigmoid(beta * (ln(pc / p0c) - ln(pr / p0r)))`.
pub fn dpo_pair_loss(
    pr_chosen: f64,
    pr0_chosen: f64,
    pr_rejected: f64,
    pr0_rejected: f64,
    beta: f64,
) -> Result<f64, DpoError> {
    let lc = check_prob(pr_chosen, "chosen")?;
    let l0c = check_prob(pr0_chosen, "reference chosen")?;
    let lr = check_prob(pr_rejected, "rejected")?;
    let l0r = check_prob(pr0_rejected, "reference rejected")?;
    if !beta.is_finite() || beta < 0.0 {
        return Err(DpoError::Validation(
            "beta must be finite and non-negative".into(),
        ));
    }
    Ok(softplus(-margin(lc, l0c, lr, l0r, beta)))
}

/// Pairs tokenized once, with every distinct (prompt tail, target) stored a single time.
#[derive(Debug, Clone, Default)]
pub struct PairCorpus {
    seqs: Vec<(Vec<Token>, Vec<Token>)>,
    pairs: Vec<(usize, usize)>,
}

impl PairCorpus {
    pub fn new(pairs: &[PreferencePair], window: usize) -> Self {
        let mut index: HashMap<(Vec<Token>, Vec<Token>), usize> = HashMap::new();
        let mut corpus = PairCorpus::default();
        let mut intern =
            |prompt: &[Token], text: &str, seqs: &mut Vec<(Vec<Token>, Vec<Token>)>| {
                let key = (prompt.to_vec(), encode_target(text));
                *index.entry(key).or_insert_with_key(|k| {
                    seqs.push(k.clone());
                    seqs.len() - 1
                })
            };
        for p in pairs {
            let full = encode_text(&p.prompt);
            let tail = &full[full.len().saturating_sub(window)..];
            let c = intern(tail, &p.chosen, &mut corpus.seqs);
            let r = intern(tail, &p.rejected, &mut corpus.seqs);
            corpus.pairs.push((c, r));
        }
        corpus
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn distinct_sequences(&self) -> usize {
        self.seqs.len()
    }

    fn views(&self, ids: &[usize]) -> Vec<(&[Token], &[Token])> {
        ids.iter()
            .map(|&i| (&self.seqs[i].0[..], &self.seqs[i].1[..]))
            .collect()
    }

    /// Mean probability of every distinct sequence in evaluation mode.
    pub fn score_all(
        &self,
        model: &TinyLm,
        mean: MeanKind,
        chunk: usize,
    ) -> Result<Vec<(f64, f64)>, DpoError> {
        let ids: Vec<usize> = (0..self.seqs.len()).collect();
        Ok(model
            .score_many(&self.views(&ids), mean, chunk)?
            .into_iter()
            .map(|s| (s.mean_prob, s.log_mean))
            .collect())
    }
}

/// Mean pair loss over `batch` (indices into the corpus pairs) and its gradient.
pub fn batch_loss_and_grad(
    model: &TinyLm,
    corpus: &PairCorpus,
    reference_log_mean: &[f64],
    batch: &[usize],
    beta: f64,
    mean: MeanKind,
    dropout: Dropout,
) -> Result<(f64, Vec<f64>), DpoError> {
    if batch.is_empty() {
        return Err(DpoError::Validation("empty batch".into()));
    }
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut ids = Vec::new();
    let mut slot = |seq: usize| {
        *local.entry(seq).or_insert_with(|| {
            ids.push(seq);
            ids.len() - 1
        })
    };
    let slots: Vec<(usize, usize)> = batch
        .iter()
        .map(|&i| {
            let (c, r) = corpus.pairs[i];
            (slot(c), slot(r))
        })
        .collect();
    let seq_batch = model.new_batch(corpus.views(&ids))?;
    let fwd = model.forward_batch(&seq_batch, dropout)?;
    let scores = model.scores_from(&fwd, &seq_batch, mean);
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut g_log = vec![0.0; ids.len()];
    for (&pi, &(sc, sr)) in batch.iter().zip(&slots) {
        let (c, r) = corpus.pairs[pi];
        let z = margin(
            scores[sc].log_mean,
            reference_log_mean[c],
            scores[sr].log_mean,
            reference_log_mean[r],
            beta,
        );
        loss += softplus(-z);
        let d = -beta * sigmoid(-z) / n;
        g_log[sc] += d;
        g_log[sr] -= d;
    }
    let dz = model.logit_grad_from_sequences(&fwd, &seq_batch, &scores, &g_log, mean);
    Ok((loss / n, model.backward(&fwd, &seq_batch, &dz)))
}

/// Fraction of pairs whose chosen side gets a strictly higher mean probability.
pub fn preference_score(
    model: &TinyLm,
    pairs: &[PreferencePair],
    mean: MeanKind,
    eval_batch: usize,
) -> Result<f64, DpoError> {
    preference_score_corpus(
        model,
        &PairCorpus::new(pairs, model.config().window),
        mean,
        eval_batch,
    )
}

pub fn preference_score_corpus(
    model: &TinyLm,
    corpus: &PairCorpus,
    mean: MeanKind,
    eval_batch: usize,
) -> Result<f64, DpoError> {
    if corpus.is_empty() {
        return Err(DpoError::Validation("no pairs to score".into()));
    }
    let scores = corpus.score_all(model, mean, eval_batch)?;
    Ok(ps_from_scores(corpus, &scores))
}

fn ps_from_scores(corpus: &PairCorpus, scores: &[(f64, f64)]) -> f64 {
    let wins = corpus
        .pairs
        .iter()
        .filter(|&&(c, r)| scores[c].0 > scores[r].0)
        .count();
    wins as f64 / corpus.len() as f64
}

/// Highest validation PS, earliest step on ties.
pub fn select_checkpoint(checkpoints: &[Checkpoint]) -> Result<&Checkpoint, DpoError> {
    let mut best = checkpoints
        .first()
        .ok_or_else(|| DpoError::Validation("no checkpoints".into()))?;
    for c in &checkpoints[1..] {
        if c.validation_ps > best.validation_ps
            || (c.validation_ps == best.validation_ps && c.step < best.step)
        {
            best = c;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: usize,
    pub epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_ps: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TinyLm,
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<TrainLogRecord>,
    /// Mean loss over all training pairs before the first update, evaluation mode.
    pub initial_loss: f64,
    /// Mean of the recorded batch losses, one entry per epoch.
    pub epoch_mean_loss: Vec<f64>,
    /// Mean loss over all training pairs after the last update, evaluation mode.
    pub final_eval_loss: f64,
}

fn corpus_loss(corpus: &PairCorpus, policy: &[(f64, f64)], reference: &[f64], beta: f64) -> f64 {
    let total: f64 = corpus
        .pairs
        .iter()
        .map(|&(c, r)| {
            softplus(-margin(
                policy[c].1,
                reference[c],
                policy[r].1,
                reference[r],
                beta,
            ))
        })
        .sum();
    total / corpus.len() as f64
}

/// One or more epochs of mini-batch SGD on the mean pair loss against a
/// frozen copy of `init`, with dropout on the policy only.
pub fn train(
    pairs: &[PreferencePair],
    val_pairs: &[PreferencePair],
    init: &TinyLm,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, DpoError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(DpoError::Validation("no training pairs".into()));
    }
    if val_pairs.is_empty() {
        return Err(DpoError::Validation("no validation pairs".into()));
    }
    let window = init.config().window;
    let corpus = PairCorpus::new(pairs, window);
    let val = PairCorpus::new(val_pairs, window);
    let reference = init;
    let ref_scores = corpus.score_all(reference, cfg.mean, cfg.eval_batch)?;
    let ref_log: Vec<f64> = ref_scores.iter().map(|s| s.1).collect();
    let initial_loss = corpus_loss(&corpus, &ref_scores, &ref_log, cfg.beta);

    let batches_per_epoch = corpus.len().div_ceil(cfg.train_batch);
    let every = cfg
        .checkpoint_every
        .unwrap_or_else(|| batches_per_epoch.div_ceil(8))
        .max(1);
    let total_steps = batches_per_epoch * cfg.epochs;

    let mut policy = init.clone();
    let mut log = Vec::new();
    let snapshot = |model: &TinyLm,
                    step: usize,
                    epoch: usize,
                    log: &mut Vec<TrainLogRecord>|
     -> Result<Checkpoint, DpoError> {
        let ps = preference_score_corpus(model, &val, cfg.mean, cfg.eval_batch)?;
        log::info!("step {step}: validation PS {ps:.4}");
        log.push(TrainLogRecord {
            step,
            epoch,
            train_loss: None,
            validation_ps: Some(ps),
        });
        Ok(Checkpoint {
            step,
            model: model.clone(),
            validation_ps: ps,
        })
    };
    let mut checkpoints = vec![snapshot(&policy, 0, 0, &mut log)?];

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d61_736b);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_mean_loss = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.train_batch) {
            let dropout = if cfg.dropout_rate > 0.0 {
                Dropout::Mask {
                    rate: cfg.dropout_rate,
                    seed: mask_rng.random(),
                }
            } else {
                Dropout::Off
            };
            let result = batch_loss_and_grad(
                &policy, &corpus, &ref_log, chunk, cfg.beta, cfg.mean, dropout,
            );
            let (loss, grad) = match result {
                Ok(v) if v.0.is_finite() && v.1.iter().all(|g| g.is_finite()) => v,
                Ok(_) | Err(DpoError::Model(TinyLmError::Numerical(_))) => {
                    let last_good = checkpoints.last().cloned().expect("step 0 snapshot");
                    return Err(DpoError::Diverged {
                        step: step + 1,
                        last_good: Box::new(last_good),
                    });
                }
                Err(e) => return Err(e),
            };
            policy.sgd_step(&grad, cfg.learning_rate);
            step += 1;
            sum += loss;
            log.push(TrainLogRecord {
                step,
                epoch,
                train_loss: Some(loss),
                validation_ps: None,
            });
            if step % every == 0 || step == total_steps {
                checkpoints.push(snapshot(&policy, step, epoch, &mut log)?);
            }
        }
        epoch_mean_loss.push(sum / batches_per_epoch as f64);
    }
    let final_scores = corpus.score_all(&policy, cfg.mean, cfg.eval_batch)?;
    let final_eval_loss = corpus_loss(&corpus, &final_scores, &ref_log, cfg.beta);
    Ok(TrainOutcome {
        model: policy,
        checkpoints,
        log,
        initial_loss,
        epoch_mean_loss,
        final_eval_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairing::{CombinationMode, PairMeta};
    use crate::tinylm::TinyLmConfig;

    fn pair(prompt: &str, chosen: &str, rejected: &str) -> PreferencePair {
        PreferencePair {
            prompt: prompt.into(),
            chosen: chosen.into(),
            rejected: rejected.into(),
            meta: PairMeta {
                question_id: "q".into(),
                mode: CombinationMode::BestRandom,
                seed: 0,
                chosen_rank: 1,
                rejected_draw: 1,
            },
        }
    }

    #[test]
    fn loss_fixed_points() {
        let ln2 = std::f64::consts::LN_2;
        assert!((dpo_pair_loss(0.3, 0.3, 0.7, 0.7, 0.1).unwrap() - ln2).abs() < 1e-12);
        assert!((dpo_pair_loss(0.9, 0.1, 0.2, 0.8, 0.0).unwrap() - ln2).abs() < 1e-12);
        let e = std::f64::consts::E;
        let v = dpo_pair_loss(e * 0.1, 0.1, 0.5, 0.5, 1.0).unwrap();
        assert!((v - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!(dpo_pair_loss(0.0, 0.5, 0.5, 0.5, 0.1).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn selection_rules() {
        let m = TinyLm::zeros(TinyLmConfig {
            hidden: 2,
            embed_dim: 2,
            window: 1,
            ..Default::default()
        })
        .unwrap();
        let ck = |step, ps| Checkpoint {
            step,
            model: m.clone(),
            validation_ps: ps,
        };
        let list = vec![ck(0, 0.5), ck(10, 0.8), ck(20, 0.7)];
        assert_eq!(select_checkpoint(&list).unwrap().step, 10);
        let flat = vec![ck(0, 0.5), ck(10, 0.5), ck(20, 0.5)];
        assert_eq!(select_checkpoint(&flat).unwrap().step, 0);
        assert_eq!(select_checkpoint(&flat[2..]).unwrap().step, 20);
        assert!(select_checkpoint(&[]).is_err());
    }

    #[test]
    fn ps_counts_strict_wins() {
        let m = TinyLm::zeros(TinyLmConfig::default()).unwrap();
        // A uniform model ties every pair.
        let pairs = vec![pair("p", "aa", "bb"), pair("p", "cc", "dd")];
        assert_eq!(
            preference_score(&m, &pairs, MeanKind::Arithmetic, 64).unwrap(),
            0.0
        );
        assert!(preference_score(&m, &[], MeanKind::Arithmetic, 64).is_err());
    }

    #[test]
    fn corpus_interns_shared_texts() {
        let pairs = vec![
            pair("t\nq1", "a", "b"),
            pair("t\nq1", "a", "c"),
            pair("t\nq2", "a", "b"),
        ];
        let c = PairCorpus::new(&pairs, 8);
        assert_eq!(c.len(), 3);
        assert_eq!(c.distinct_sequences(), 5);
    }

    fn toy_pairs(n: usize) -> Vec<PreferencePair> {
        (0..n)
            .map(|i| {
                pair(
                    &format!("rewrite:\nq{}", i % 7),
                    &format!("good answer {}", i % 5),
                    &format!("bad {}", i % 3),
                )
            })
            .collect()
    }

    #[test]
    fn step_zero_is_ln2_and_training_is_reproducible() {
        let init = TinyLm::random(TinyLmConfig::default(), 1, 1.0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            dropout_rate: 0.2,
            ..Default::default()
        };
        let train_pairs = toy_pairs(200);
        let before = init.checksum();
        let a = train(&train_pairs, &toy_pairs(20), &init, &cfg).unwrap();
        assert!((a.initial_loss - std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(init.checksum(), before);
        assert!(
            a.epoch_mean_loss[0] < a.initial_loss,
            "{:?}",
            a.epoch_mean_loss
        );
        assert!(a.final_eval_loss < a.initial_loss);
        let b = train(&train_pairs, &toy_pairs(20), &init, &cfg).unwrap();
        assert_eq!(a.model.checksum(), b.model.checksum());
        // 7 batches, snapshots every step plus step 0.
        let steps: Vec<_> = a.checkpoints.iter().map(|c| c.step).collect();
        assert_eq!(steps, (0..=7).collect::<Vec<_>>());
        assert_eq!(a.checkpoints[0].model, init);
    }

    #[test]
    fn cadence_is_an_eighth_plus_final() {
        let init = TinyLm::random(
            TinyLmConfig {
                hidden: 8,
                embed_dim: 4,
                ..Default::default()
            },
            1,
            1.0,
        )
        .unwrap();
        let cfg = TrainConfig {
            train_batch: 2,
            ..Default::default()
        };
        let out = train(&toy_pairs(41), &toy_pairs(5), &init, &cfg).unwrap();
        // 21 batches -> every 3 steps, plus the final step 21.
        let steps: Vec<_> = out.checkpoints.iter().map(|c| c.step).collect();
        assert_eq!(steps, [0, 3, 6, 9, 12, 15, 18, 21]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn positive_and_monotone(
                pc in 1e-6f64..1.0, p0c in 1e-6f64..1.0, pr in 1e-6f64..1.0, p0r in 1e-6f64..1.0,
                beta in 0.01f64..5.0, bump in 1.01f64..2.0,
            ) {
                let l = dpo_pair_loss(pc, p0c, pr, p0r, beta).unwrap();
                prop_assert!(l > 0.0);
                let up_c = (pc * bump).min(1.0);
                if up_c > pc {
                    prop_assert!(dpo_pair_loss(up_c, p0c, pr, p0r, beta).unwrap() <= l);
                }
                let up_r = (pr * bump).min(1.0);
                if up_r > pr {
                    prop_assert!(dpo_pair_loss(pc, p0c, up_r, p0r, beta).unwrap() >= l);
                }
            }
        }
    }
}
