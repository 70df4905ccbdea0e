use rand::Rng;

use super::NumError;

/// Log-probabilities of the masked softmax; masked entries are `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>, NumError> {
    if logits.len() != mask.len() {
        return Err(NumError::Shape(format!(
            "{} logits vs {} mask entries",
            logits.len(),
            mask.len()
        )));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NumError::NoLegalAction);
    }
    if !max.is_finite() {
        return Err(NumError::NonFinite("logit".into()));
    }
    let sum: f64 = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&z, _)| (z - max).exp())
        .sum();
    let log_z = max + sum.ln();
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(&z, &m)| if m { z - log_z } else { f64::NEG_INFINITY })
        .collect())
}

/// Entropy of a distribution given as log-probabilities (`-inf` entries ignored).
pub fn entropy(log_probs: &[f64]) -> f64 {
    log_probs
        .iter()
        .filter(|lp| lp.is_finite())
        .map(|&lp| -lp.exp() * lp)
        .sum()
}

/// Draws from the masked softmax over `logits`.
///
/// Returns the chosen index and its log-probability.
pub fn categorical_sample<R: Rng>(
    logits: &[f64],
    mask: &[bool],
    rng: &mut R,
) -> Result<(usize, f64), NumError> {
    let lp = masked_log_softmax(logits, mask)?;
    Ok(sample_from_log_probs(&lp, rng))
}

pub fn sample_from_log_probs<R: Rng>(log_probs: &[f64], rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &lp) in log_probs.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        last = i;
        acc += lp.exp();
        if u < acc {
            return (i, lp);
        }
    }
    // Rounding left u beyond the accumulated mass: take the last legal entry.
    (last, log_probs[last])
}
