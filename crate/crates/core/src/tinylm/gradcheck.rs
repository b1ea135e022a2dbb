use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{TinyLm, TinyLmError};

/// Fewest parameters a check will probe.
pub const MIN_CHECKED: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Flat index of the parameter with the largest error.
    pub worst_index: Option<usize>,
}

/// Compares the analytic gradient returned by `loss` with central finite
/// differences on a random subset of at least 200 parameters.
///
/// `loss` returns `(value, flat gradient)` and must be deterministic in the
/// parameters; a dropout mask that changes between calls breaks the check.
pub fn grad_finite_diff_check<F>(
    model: &TinyLm,
    mut loss: F,
    epsilon: f64,
    n_params: usize,
    seed: u64,
) -> Result<GradCheckReport, TinyLmError>
where
    F: FnMut(&TinyLm) -> Result<(f64, Vec<f64>), TinyLmError>,
{
    let (_, analytic) = loss(model)?;
    if analytic.len() != model.param_count() {
        return Err(TinyLmError::Validation(
            "gradient length does not match parameters".into(),
        ));
    }
    if analytic.iter().any(|g| !g.is_finite()) {
        return Err(TinyLmError::Numerical(
            "non-finite analytic gradient".into(),
        ));
    }
    let total = model.param_count();
    let n = n_params.max(MIN_CHECKED).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: n,
        worst_index: None,
    };
    for i in sample(&mut rng, total, n) {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + epsilon;
        let (up, _) = loss(&probe)?;
        probe.params_mut()[i] = orig - epsilon;
        let (down, _) = loss(&probe)?;
        probe.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * epsilon);
        if !fd.is_finite() {
            return Err(TinyLmError::Numerical(format!(
                "non-finite difference at parameter {i}"
            )));
        }
        let an = analytic[i];
        let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-12);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}
