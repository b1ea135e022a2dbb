use rand::Rng;

use super::{TinyLm, TinyLmError, Token, EOS};

/// Nucleus sampling of a continuation of `prompt` (closed with EOS), stopping at EOS (not included) or
/// `max_tokens`. Temperature 0 decodes greedily, ties going to the lowest id.
pub fn sample_sequence<R: Rng + ?Sized>(
    model: &TinyLm,
    prompt: &[Token],
    top_p: f64,
    temperature: f64,
    max_tokens: usize,
    rng: &mut R,
) -> Result<Vec<Token>, TinyLmError> {
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(TinyLmError::Validation("top_p must be in (0, 1]".into()));
    }
    if !(temperature >= 0.0) {
        return Err(TinyLmError::Validation("temperature must be >= 0".into()));
    }
    let mut history = prompt.to_vec();
    history.push(EOS);
    let mut out = Vec::new();
    while out.len() < max_tokens {
        let probs = model.forward(&history, false, 0)?;
        let next = if temperature == 0.0 {
            argmax(&probs)
        } else {
            draw(&probs, top_p, temperature, rng)
        };
        if next == EOS {
            break;
        }
        out.push(next);
        history.push(next);
    }
    Ok(out)
}

fn argmax(probs: &[f64]) -> Token {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best as Token
}

fn draw<R: Rng + ?Sized>(probs: &[f64], top_p: f64, temperature: f64, rng: &mut R) -> Token {
    let weights: Vec<f64> = if temperature == 1.0 {
        probs.to_vec()
    } else {
        let logs: Vec<f64> = probs.iter().map(|p| p.ln() / temperature).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    };
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    let mut kept = 0;
    let mut mass = 0.0;
    for &i in &order {
        kept += 1;
        mass += weights[i];
        if mass >= top_p {
            break;
        }
    }
    let nucleus = &order[..kept];
    let mut u = rng.random::<f64>() * mass;
    for &i in nucleus {
        u -= weights[i];
        if u < 0.0 {
            return i as Token;
        }
    }
    nucleus[kept - 1] as Token
}
