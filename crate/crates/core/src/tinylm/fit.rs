//! Maximum-likelihood fitting, used to warm-start a model on sampled text.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dropout, TinyLm, TinyLmError, Token};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Sequences per step.
    pub batch: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            learning_rate: 0.5,
            batch: 32,
            dropout_rate: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub steps: usize,
    /// Mean per-token negative log-likelihood of each epoch's batches.
    pub epoch_loss: Vec<f64>,
}

/// Mini-batch SGD on mean next-token negative log-likelihood.
pub fn fit_likelihood(
    model: &mut TinyLm,
    seqs: &[(Vec<Token>, Vec<Token>)],
    cfg: &FitConfig,
) -> Result<FitReport, TinyLmError> {
    if seqs.is_empty() {
        return Err(TinyLmError::Validation("no sequences to fit".into()));
    }
    if cfg.batch == 0 || !(cfg.learning_rate > 0.0) {
        return Err(TinyLmError::Validation(
            "batch and learning_rate must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut report = FitReport {
        steps: 0,
        epoch_loss: Vec::new(),
    };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let batch = model.new_batch(chunk.iter().map(|&i| (&seqs[i].0[..], &seqs[i].1[..])))?;
            let dropout = if cfg.dropout_rate > 0.0 {
                Dropout::Mask {
                    rate: cfg.dropout_rate,
                    seed: rng.random(),
                }
            } else {
                Dropout::Off
            };
            let fwd = model.forward_batch(&batch, dropout)?;
            let probs = fwd.probs();
            let loss = -batch
                .targets()
                .iter()
                .enumerate()
                .map(|(r, &t)| probs[[r, t as usize]].ln())
                .sum::<f64>()
                / batch.rows() as f64;
            if !loss.is_finite() {
                return Err(TinyLmError::Numerical(format!(
                    "non-finite loss at step {}",
                    report.steps
                )));
            }
            let dz = model.logit_grad_nll(&fwd, &batch);
            let grad = model.backward(&fwd, &batch, &dz);
            model.sgd_step(&grad, cfg.learning_rate);
            total += loss;
            batches += 1;
            report.steps += 1;
        }
        report.epoch_loss.push(total / batches as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tinylm::{encode_target, encode_text, TinyLmConfig};

    #[test]
    fn fitting_reduces_loss() {
        let mut m = TinyLm::random(TinyLmConfig::default(), 1, 0.5).unwrap();
        let seqs: Vec<_> = [
            "what causes rain?",
            "what causes snow?",
            "what causes hail?",
        ]
        .iter()
        .map(|s| (encode_text("q:"), encode_target(s)))
        .collect();
        let cfg = FitConfig {
            epochs: 30,
            batch: 2,
            ..Default::default()
        };
        let r = fit_likelihood(&mut m, &seqs, &cfg).unwrap();
        assert!(
            r.epoch_loss.last().unwrap() < &(r.epoch_loss[0] * 0.5),
            "{:?}",
            r.epoch_loss
        );
    }
}
