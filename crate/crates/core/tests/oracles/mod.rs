//! Brute-force reference implementations used only by tests. Nothing here
//! calls into the library code it is compared against.

#![allow(dead_code)]

use std::fmt::Debug;

/// Result of comparing an implementation with an oracle over many cases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub cases: usize,
    pub mismatches: usize,
    pub first_mismatch: Option<String>,
}

impl OracleReport {
    pub fn check<T: PartialEq + Debug>(
        &mut self,
        label: impl FnOnce() -> String,
        got: &T,
        want: &T,
    ) {
        self.cases += 1;
        if got != want {
            self.mismatches += 1;
            if self.first_mismatch.is_none() {
                self.first_mismatch = Some(format!("{}: got {got:?}, want {want:?}", label()));
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.cases > 0
    }
}

/// Indices of candidates at least as good as the baseline on every criterion
/// and strictly better on one (first list), and the mirror image (second list).
pub fn brute_force_partition(
    candidates: &[Vec<f64>],
    baseline: &[f64],
    larger_is_better: &[bool],
) -> (Vec<usize>, Vec<usize>) {
    let k = baseline.len();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        let mut all_no_worse = true;
        let mut any_better = false;
        let mut all_no_better = true;
        let mut any_worse = false;
        for j in 0..k {
            let (better, worse) = if larger_is_better[j] {
                (c[j] > baseline[j], c[j] < baseline[j])
            } else {
                (c[j] < baseline[j], c[j] > baseline[j])
            };
            if worse {
                all_no_worse = false;
                any_worse = true;
            }
            if better {
                any_better = true;
                all_no_better = false;
            }
        }
        if all_no_worse && any_better {
            plus.push(i);
        }
        if all_no_better && any_worse {
            minus.push(i);
        }
    }
    (plus, minus)
}

/// Central differences of `f` at `params` for each index in `coords`.
pub fn finite_diff_gradient<F>(mut f: F, params: &[f64], epsilon: f64, coords: &[usize]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = params.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = probe[i];
            probe[i] = orig + epsilon;
            let up = f(&probe);
            probe[i] = orig - epsilon;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * epsilon)
        })
        .collect()
}

/// Shape of the byte-level window model.
#[derive(Debug, Clone, Copy)]
pub struct NaiveDims {
    pub vocab: usize,
    pub window: usize,
    pub embed: usize,
    pub hidden: usize,
}

pub const NAIVE_EOS: usize = 256;

impl NaiveDims {
    pub fn standard(window: usize, embed: usize, hidden: usize) -> Self {
        Self {
            vocab: 257,
            window,
            embed,
            hidden,
        }
    }

    pub fn param_count(&self) -> usize {
        let (v, w, d, h) = (self.vocab, self.window, self.embed, self.hidden);
        v * d + w * d * h + h + h * v + v
    }
}

/// Softmax over the vocabulary for one full window, with loops only.
pub fn naive_next_probs(params: &[f64], dims: NaiveDims, context: &[usize]) -> Vec<f64> {
    let (v, w, d, h) = (dims.vocab, dims.window, dims.embed, dims.hidden);
    assert_eq!(context.len(), w);
    let emb = 0;
    let w1 = emb + v * d;
    let b1 = w1 + w * d * h;
    let w2 = b1 + h;
    let b2 = w2 + h * v;
    let mut hid = vec![0.0; h];
    for (k, slot) in hid.iter_mut().enumerate() {
        let mut acc = params[b1 + k];
        for (pos, &tok) in context.iter().enumerate() {
            for j in 0..d {
                acc += params[emb + tok * d + j] * params[w1 + (pos * d + j) * h + k];
            }
        }
        *slot = acc.tanh();
    }
    let mut logits = vec![0.0; v];
    for (o, slot) in logits.iter_mut().enumerate() {
        let mut acc = params[b2 + o];
        for (k, hv) in hid.iter().enumerate() {
            acc += hv * params[w2 + k * v + o];
        }
        *slot = acc;
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-token probabilities of `target` bytes plus a closing EOS after
/// `prompt` bytes and an EOS separator, left-padded with EOS.
pub fn naive_token_probs(params: &[f64], dims: NaiveDims, prompt: &str, target: &str) -> Vec<f64> {
    let mut history: Vec<usize> = vec![NAIVE_EOS; dims.window];
    history.extend(prompt.bytes().map(usize::from));
    history.push(NAIVE_EOS);
    let goal: Vec<usize> = target.bytes().map(usize::from).chain([NAIVE_EOS]).collect();
    let mut out = Vec::with_capacity(goal.len());
    for &next in &goal {
        let ctx = &history[history.len() - dims.window..];
        out.push(naive_next_probs(params, dims, ctx)[next]);
        history.push(next);
    }
    out
}

pub fn naive_mean_prob(params: &[f64], dims: NaiveDims, prompt: &str, target: &str) -> f64 {
    let p = naive_token_probs(params, dims, prompt, target);
    p.iter().sum::<f64>() / p.len() as f64
}

/// Mean over pairs of `-ln sigmoid(beta * (ln(pc/p0c) - ln(pr/p0r)))` with
/// arithmetic mean token probabilities and no dropout. `reference` holds the
/// frozen model's (chosen, rejected) mean probabilities per pair.
pub fn naive_dpo_loss(
    policy: &[f64],
    reference: &[(f64, f64)],
    dims: NaiveDims,
    pairs: &[(String, String, String)],
    beta: f64,
) -> f64 {
    let mut total = 0.0;
    for ((prompt, chosen, rejected), (p0c, p0r)) in pairs.iter().zip(reference) {
        let pc = naive_mean_prob(policy, dims, prompt, chosen);
        let pr = naive_mean_prob(policy, dims, prompt, rejected);
        let z = beta * ((pc / p0c).ln() - (pr / p0r).ln());
        total += (1.0 + (-z).exp()).ln();
    }
    total / pairs.len() as f64
}
