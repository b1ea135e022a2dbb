//! Byte-level fixed-window neural language model with hand-written backprop.
//!
//! Each position sees the previous `window` tokens (left-padded), whose
//! embeddings are concatenated, passed through one tanh hidden layer and
//! projected to a softmax over the 256 byte values plus end-of-sequence.
//! A prompt is closed with EOS before its continuation, so the first target
//! position can tell a fresh turn from the middle of a text.
//!
//! Parameters live in one flat `f64` buffer in the order embedding,
//! hidden weights, hidden bias, output weights, output bias, each row-major.
//! Gradients use the same layout.

mod checkpoint;
mod fit;
mod gradcheck;
mod sample;

use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::CHECKPOINT_VERSION;
pub use fit::{fit_likelihood, FitConfig, FitReport};
pub use gradcheck::{grad_finite_diff_check, GradCheckReport};
pub use sample::sample_sequence;

pub type Token = u16;

pub const VOCAB_SIZE: usize = 257;
pub const EOS: Token = 256;
/// Context slots before the start of the history are filled with EOS.
pub const PAD: Token = EOS;

pub fn encode_text(text: &str) -> Vec<Token> {
    text.bytes().map(Token::from).collect()
}

/// Bytes of `text` followed by EOS.
pub fn encode_target(text: &str) -> Vec<Token> {
    let mut out = encode_text(text);
    out.push(EOS);
    out
}

/// Bytes up to the first EOS, decoded lossily.
pub fn decode_tokens(tokens: &[Token]) -> String {
    let bytes: Vec<u8> = tokens
        .iter()
        .take_while(|&&t| t != EOS)
        .map(|&t| t as u8)
        .collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[derive(Debug, Error)]
pub enum TinyLmError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TinyLmConfig {
    pub vocab_size: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
}

impl Default for TinyLmConfig {
    fn default() -> Self {
        Self {
            vocab_size: VOCAB_SIZE,
            window: 8,
            embed_dim: 32,
            hidden: 64,
            dropout_rate: 0.8,
        }
    }
}

impl TinyLmConfig {
    pub fn validate(&self) -> Result<(), TinyLmError> {
        if self.vocab_size != VOCAB_SIZE {
            return Err(TinyLmError::Validation(format!(
                "vocab_size must be {VOCAB_SIZE}"
            )));
        }
        if self.window == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return Err(TinyLmError::Validation(
                "window, embed_dim and hidden must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(TinyLmError::Validation(
                "dropout_rate must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let emb = 0;
        let w1 = emb + self.vocab_size * self.embed_dim;
        let b1 = w1 + self.window * self.embed_dim * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.vocab_size;
        Layout {
            emb,
            w1,
            b1,
            w2,
            b2,
            total: b2 + self.vocab_size,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    emb: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    total: usize,
}

/// Hidden-layer dropout for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dropout {
    Off,
    /// Inverted dropout; the whole mask is drawn row by row from `seed`.
    Mask {
        rate: f64,
        seed: u64,
    },
}

/// `rows x cols` matrix of `0` or `1 / (1 - rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() >= rate {
            keep
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanKind {
    /// Plain average of per-token probabilities.
    #[default]
    Arithmetic,
    /// Exponentiated average log-probability.
    Geometric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceScore {
    pub per_token_probs: Vec<f64>,
    pub mean_prob: f64,
    /// Natural log of `mean_prob`, computed without round-tripping through it.
    pub log_mean: f64,
}

impl SequenceScore {
    pub fn new(per_token_probs: Vec<f64>, kind: MeanKind) -> Self {
        let t = per_token_probs.len() as f64;
        let (mean_prob, log_mean) = match kind {
            MeanKind::Arithmetic => {
                let m = per_token_probs.iter().sum::<f64>() / t;
                (m, m.ln())
            }
            MeanKind::Geometric => {
                let l = per_token_probs.iter().map(|p| p.ln()).sum::<f64>() / t;
                (l.exp(), l)
            }
        };
        Self {
            per_token_probs,
            mean_prob,
            log_mean,
        }
    }
}

/// Target positions of several (prompt, target) sequences laid out as rows.
#[derive(Debug, Clone, Default)]
pub struct SequenceBatch {
    window: usize,
    contexts: Vec<Token>,
    targets: Vec<Token>,
    spans: Vec<Range<usize>>,
}

impl SequenceBatch {
    pub fn new<'a>(
        window: usize,
        seqs: impl IntoIterator<Item = (&'a [Token], &'a [Token])>,
    ) -> Result<Self, TinyLmError> {
        let mut batch = SequenceBatch {
            window,
            ..Default::default()
        };
        for (prompt, target) in seqs {
            batch.push(prompt, target)?;
        }
        Ok(batch)
    }

    pub fn push(&mut self, prompt: &[Token], target: &[Token]) -> Result<(), TinyLmError> {
        if target.is_empty() {
            return Err(TinyLmError::Validation("target sequence is empty".into()));
        }
        if let Some(&t) = prompt
            .iter()
            .chain(target)
            .find(|&&t| t as usize >= VOCAB_SIZE)
        {
            return Err(TinyLmError::Validation(format!(
                "token {t} outside vocabulary"
            )));
        }
        let w = self.window;
        let mut closed = prompt[prompt.len().saturating_sub(w)..].to_vec();
        closed.push(EOS);
        let tail = &closed[closed.len().saturating_sub(w)..];
        let mut hist = vec![PAD; w - tail.len()];
        hist.extend_from_slice(tail);
        hist.extend_from_slice(target);
        let start = self.targets.len();
        for k in 0..target.len() {
            self.contexts.extend_from_slice(&hist[k..k + w]);
        }
        self.targets.extend_from_slice(target);
        self.spans.push(start..self.targets.len());
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn targets(&self) -> &[Token] {
        &self.targets
    }

    fn context(&self, row: usize) -> &[Token] {
        &self.contexts[row * self.window..(row + 1) * self.window]
    }
}

/// Intermediate values of a batched forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Forward {
    x: Array2<f64>,
    hidden: Array2<f64>,
    mask: Option<Array2<f64>>,
    hidden_out: Array2<f64>,
    probs: Array2<f64>,
}

impl Forward {
    pub fn probs(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    /// Hidden activations after dropout.
    pub fn hidden_out(&self) -> ArrayView2<'_, f64> {
        self.hidden_out.view()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyLm {
    cfg: TinyLmConfig,
    params: Vec<f64>,
}

impl TinyLm {
    pub fn zeros(cfg: TinyLmConfig) -> Result<Self, TinyLmError> {
        cfg.validate()?;
        Ok(Self {
            params: vec![0.0; cfg.param_count()],
            cfg,
        })
    }

    /// Gaussian init: embeddings with std `scale`, weight matrices with std
    /// `scale / sqrt(fan_in)`, zero biases.
    pub fn random(cfg: TinyLmConfig, seed: u64, scale: f64) -> Result<Self, TinyLmError> {
        let mut m = Self::zeros(cfg)?;
        let lay = cfg.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: Range<usize>, std: f64, params: &mut [f64]| {
            for p in &mut params[range] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p = z * std;
            }
        };
        let fan1 = (cfg.window * cfg.embed_dim) as f64;
        fill(lay.emb..lay.w1, scale, &mut m.params);
        fill(lay.w1..lay.b1, scale / fan1.sqrt(), &mut m.params);
        fill(
            lay.w2..lay.b2,
            scale / (cfg.hidden as f64).sqrt(),
            &mut m.params,
        );
        Ok(m)
    }

    pub fn from_params(cfg: TinyLmConfig, params: Vec<f64>) -> Result<Self, TinyLmError> {
        cfg.validate()?;
        if params.len() != cfg.param_count() {
            return Err(TinyLmError::Validation(format!(
                "expected {} parameters, got {}",
                cfg.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(TinyLmError::Numerical("non-finite parameter".into()));
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &TinyLmConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// `params -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) {
        assert_eq!(grad.len(), self.params.len(), "gradient length mismatch");
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= lr * g;
        }
    }

    fn view2(&self, off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[off..off + rows * cols]).expect("layout")
    }

    fn view1(&self, off: usize, len: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[off..off + len])
    }

    pub fn new_batch<'a>(
        &self,
        seqs: impl IntoIterator<Item = (&'a [Token], &'a [Token])>,
    ) -> Result<SequenceBatch, TinyLmError> {
        SequenceBatch::new(self.cfg.window, seqs)
    }

    pub fn forward_batch(
        &self,
        batch: &SequenceBatch,
        dropout: Dropout,
    ) -> Result<Forward, TinyLmError> {
        let TinyLmConfig {
            vocab_size: v,
            window: w,
            embed_dim: d,
            hidden: h,
            ..
        } = self.cfg;
        if batch.window != w {
            return Err(TinyLmError::Validation(
                "batch built for a different window".into(),
            ));
        }
        let lay = self.cfg.layout();
        let n = batch.rows();
        let mut x = Array2::<f64>::zeros((n, w * d));
        {
            let xs = x.as_slice_mut().expect("standard layout");
            for r in 0..n {
                for (j, &t) in batch.context(r).iter().enumerate() {
                    let src = lay.emb + t as usize * d;
                    xs[r * w * d + j * d..][..d].copy_from_slice(&self.params[src..src + d]);
                }
            }
        }
        let mut hidden = x.dot(&self.view2(lay.w1, w * d, h));
        hidden += &self.view1(lay.b1, h);
        hidden.mapv_inplace(f64::tanh);
        let mask = match dropout {
            Dropout::Off => None,
            Dropout::Mask { rate, seed } => Some(dropout_mask(n, h, rate, seed)),
        };
        let hidden_out = match &mask {
            Some(m) => &hidden * m,
            None => hidden.clone(),
        };
        let mut probs = hidden_out.dot(&self.view2(lay.w2, h, v));
        probs += &self.view1(lay.b2, v);
        for mut row in probs.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &z| m.max(z));
            if !max.is_finite() {
                return Err(TinyLmError::Numerical("non-finite logit".into()));
            }
            row.mapv_inplace(|z| (z - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        Ok(Forward {
            x,
            hidden,
            mask,
            hidden_out,
            probs,
        })
    }

    /// Next-token distribution for one context (truncated or padded to the window).
    pub fn forward(
        &self,
        context: &[Token],
        train_mode: bool,
        mask_seed: u64,
    ) -> Result<Vec<f64>, TinyLmError> {
        let w = self.cfg.window;
        let tail = &context[context.len().saturating_sub(w)..];
        let mut batch = SequenceBatch {
            window: w,
            ..Default::default()
        };
        batch
            .contexts
            .extend(std::iter::repeat_n(PAD, w - tail.len()));
        batch.contexts.extend_from_slice(tail);
        batch.targets.push(EOS);
        batch.spans.push(0..1);
        let dropout = if train_mode {
            Dropout::Mask {
                rate: self.cfg.dropout_rate,
                seed: mask_seed,
            }
        } else {
            Dropout::Off
        };
        Ok(self.forward_batch(&batch, dropout)?.probs.row(0).to_vec())
    }

    pub fn scores_from(
        &self,
        fwd: &Forward,
        batch: &SequenceBatch,
        kind: MeanKind,
    ) -> Vec<SequenceScore> {
        batch
            .spans
            .iter()
            .map(|span| {
                let probs = span
                    .clone()
                    .map(|r| fwd.probs[[r, batch.targets[r] as usize]])
                    .collect();
                SequenceScore::new(probs, kind)
            })
            .collect()
    }

    /// Per-token probabilities of `target` after `prompt`, averaged arithmetically.
    pub fn avg_token_prob(
        &self,
        prompt: &[Token],
        target: &[Token],
    ) -> Result<SequenceScore, TinyLmError> {
        self.score_sequence(prompt, target, MeanKind::Arithmetic)
    }

    pub fn score_sequence(
        &self,
        prompt: &[Token],
        target: &[Token],
        kind: MeanKind,
    ) -> Result<SequenceScore, TinyLmError> {
        let batch = self.new_batch([(prompt, target)])?;
        let fwd = self.forward_batch(&batch, Dropout::Off)?;
        Ok(self.scores_from(&fwd, &batch, kind).remove(0))
    }

    /// Evaluation-mode scores, `chunk` sequences per forward pass.
    pub fn score_many(
        &self,
        seqs: &[(&[Token], &[Token])],
        kind: MeanKind,
        chunk: usize,
    ) -> Result<Vec<SequenceScore>, TinyLmError> {
        let mut out = Vec::with_capacity(seqs.len());
        for part in seqs.chunks(chunk.max(1)) {
            let batch = self.new_batch(part.iter().copied())?;
            let fwd = self.forward_batch(&batch, Dropout::Off)?;
            out.extend(self.scores_from(&fwd, &batch, kind));
        }
        Ok(out)
    }

    /// Gradient of the logits given upstream gradients with respect to each
    /// sequence's log mean probability.
    pub fn logit_grad_from_sequences(
        &self,
        fwd: &Forward,
        batch: &SequenceBatch,
        scores: &[SequenceScore],
        grad_log_mean: &[f64],
        kind: MeanKind,
    ) -> Array2<f64> {
        let mut dz = fwd.probs.clone();
        for ((span, score), &g) in batch.spans.iter().zip(scores).zip(grad_log_mean) {
            let t = span.len() as f64;
            for (k, r) in span.clone().enumerate() {
                let coef = match kind {
                    MeanKind::Arithmetic => g * score.per_token_probs[k] / (score.mean_prob * t),
                    MeanKind::Geometric => g / t,
                };
                let mut row = dz.row_mut(r);
                row *= -coef;
                row[batch.targets[r] as usize] += coef;
            }
        }
        dz
    }

    /// Gradient of the logits for mean next-token negative log-likelihood over all rows.
    pub fn logit_grad_nll(&self, fwd: &Forward, batch: &SequenceBatch) -> Array2<f64> {
        let n = batch.rows() as f64;
        let mut dz = fwd.probs.clone();
        for (r, &t) in batch.targets.iter().enumerate() {
            dz[[r, t as usize]] -= 1.0;
        }
        dz /= n;
        dz
    }

    /// Backpropagates logit gradients to a flat parameter gradient.
    pub fn backward(
        &self,
        fwd: &Forward,
        batch: &SequenceBatch,
        dlogits: &Array2<f64>,
    ) -> Vec<f64> {
        let TinyLmConfig {
            vocab_size: v,
            window: w,
            embed_dim: d,
            hidden: h,
            ..
        } = self.cfg;
        let lay = self.cfg.layout();
        let mut grad = vec![0.0; lay.total];

        let g_w2 = fwd.hidden_out.t().dot(dlogits);
        grad[lay.w2..lay.b2].copy_from_slice(g_w2.as_slice().expect("standard layout"));
        let g_b2 = dlogits.sum_axis(Axis(0));
        grad[lay.b2..lay.total].copy_from_slice(g_b2.as_slice().expect("standard layout"));

        let mut dh = dlogits.dot(&self.view2(lay.w2, h, v).t());
        if let Some(m) = &fwd.mask {
            dh *= m;
        }
        dh.zip_mut_with(&fwd.hidden, |g, &a| *g *= 1.0 - a * a);

        let g_w1 = fwd.x.t().dot(&dh);
        grad[lay.w1..lay.b1].copy_from_slice(
            g_w1.as_standard_layout()
                .as_slice()
                .expect("standard layout"),
        );
        let g_b1 = dh.sum_axis(Axis(0));
        grad[lay.b1..lay.w2].copy_from_slice(g_b1.as_slice().expect("standard layout"));

        let dx = dh.dot(&self.view2(lay.w1, w * d, h).t());
        let dxs = dx.as_standard_layout();
        let dxs = dxs.as_slice().expect("standard layout");
        for r in 0..batch.rows() {
            for (j, &t) in batch.context(r).iter().enumerate() {
                let dst = lay.emb + t as usize * d;
                for (g, &s) in grad[dst..dst + d]
                    .iter_mut()
                    .zip(&dxs[r * w * d + j * d..][..d])
                {
                    *g += s;
                }
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TinyLmConfig {
        TinyLmConfig {
            window: 3,
            embed_dim: 4,
            hidden: 5,
            ..Default::default()
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = TinyLm::zeros(TinyLmConfig::default()).unwrap();
        let p = m.forward(&encode_text("abc"), false, 0).unwrap();
        assert!(p.iter().all(|&x| x == 1.0 / 257.0));
        let s = m
            .avg_token_prob(&encode_text("prompt"), &encode_text("xyz"))
            .unwrap();
        assert_eq!(s.mean_prob, 1.0 / 257.0);
        let s = m
            .score_sequence(&[], &encode_target("a longer target"), MeanKind::Arithmetic)
            .unwrap();
        assert_eq!(s.mean_prob, 1.0 / 257.0);
    }

    #[test]
    fn mean_kinds() {
        let s = SequenceScore::new(vec![0.5, 0.25], MeanKind::Arithmetic);
        assert_eq!(s.mean_prob, 0.375);
        assert_eq!(
            SequenceScore::new(vec![0.9], MeanKind::Arithmetic).mean_prob,
            0.9
        );
        let g = SequenceScore::new(vec![0.5, 0.125], MeanKind::Geometric);
        assert!((g.mean_prob - 0.25).abs() < 1e-15);
    }

    #[test]
    fn distributions_normalised() {
        let m = TinyLm::random(TinyLmConfig::default(), 3, 2.0).unwrap();
        let batch = m
            .new_batch([(&encode_text("hello")[..], &encode_target("world")[..])])
            .unwrap();
        let fwd = m
            .forward_batch(&batch, Dropout::Mask { rate: 0.5, seed: 1 })
            .unwrap();
        for row in fwd.probs().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dropout_off_in_eval_and_seeded_in_train() {
        let m = TinyLm::random(TinyLmConfig::default(), 3, 1.0).unwrap();
        let ctx = encode_text("context");
        assert_eq!(
            m.forward(&ctx, false, 1).unwrap(),
            m.forward(&ctx, false, 2).unwrap()
        );
        assert_eq!(
            m.forward(&ctx, true, 5).unwrap(),
            m.forward(&ctx, true, 5).unwrap()
        );
        assert_ne!(
            m.forward(&ctx, true, 5).unwrap(),
            m.forward(&ctx, true, 6).unwrap()
        );
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let m = TinyLm::random(TinyLmConfig::default(), 11, 1.0).unwrap();
        let batch = m
            .new_batch([(&encode_text("ab")[..], &encode_text("c")[..])])
            .unwrap();
        let plain = m
            .forward_batch(&batch, Dropout::Off)
            .unwrap()
            .hidden_out()
            .row(0)
            .to_owned();
        let mut acc = ndarray::Array1::<f64>::zeros(plain.len());
        let n = 10_000;
        for s in 0..n {
            acc += &m
                .forward_batch(&batch, Dropout::Mask { rate: 0.8, seed: s })
                .unwrap()
                .hidden_out()
                .row(0);
        }
        acc /= n as f64;
        let rel = (&acc - &plain).mapv(f64::abs).sum() / plain.mapv(f64::abs).sum();
        assert!(rel < 0.02, "mean relative deviation {rel}");
    }

    #[test]
    fn window_padding_and_truncation() {
        let m = TinyLm::random(small(), 1, 1.0).unwrap();
        let long = encode_text("a long prompt whose head is ignored xyz");
        let short = encode_text("zzzzz xyz");
        let a = m.avg_token_prob(&long, &encode_text("q")).unwrap();
        let b = m.avg_token_prob(&short, &encode_text("q")).unwrap();
        assert_eq!(a, b);
        let c = m
            .avg_token_prob(&encode_text("xy"), &encode_text("q"))
            .unwrap();
        assert_ne!(a, c);
        let batch = m
            .new_batch([(&encode_text("yz")[..], &encode_text("q")[..])])
            .unwrap();
        assert_eq!(batch.context(0), &[b'y' as Token, b'z' as Token, EOS]);
        let bare = m.new_batch([(&[][..], &encode_text("q")[..])]).unwrap();
        assert_eq!(bare.context(0), &[PAD, PAD, PAD]);
    }

    #[test]
    fn batch_scores_match_singletons() {
        let m = TinyLm::random(TinyLmConfig::default(), 9, 1.5).unwrap();
        let p = encode_text("prompt");
        let t1 = encode_target("first");
        let t2 = encode_target("second one");
        let many = m
            .score_many(&[(&p, &t1), (&p, &t2)], MeanKind::Arithmetic, 64)
            .unwrap();
        assert_eq!(many[0], m.avg_token_prob(&p, &t1).unwrap());
        assert_eq!(many[1], m.avg_token_prob(&p, &t2).unwrap());
    }

    #[test]
    fn rejects_empty_target() {
        let m = TinyLm::zeros(small()).unwrap();
        assert!(matches!(
            m.avg_token_prob(&[1], &[]),
            Err(TinyLmError::Validation(_))
        ));
    }

    #[test]
    fn token_codec() {
        assert_eq!(encode_target("ab"), vec![97, 98, EOS]);
        assert_eq!(decode_tokens(&[104, 105, EOS, 106]), "hi");
        assert_eq!(decode_tokens(&encode_text("héllo")), "héllo");
    }
}
