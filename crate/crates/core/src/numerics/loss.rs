use super::Vector;
use crate::{Error, Result};

/// Softmax cross-entropy against a class index: `(-log p[target], p - onehot)`.
pub fn softmax_xent(logits: &[f64], target: usize) -> Result<(f64, Vector)> {
    if target >= logits.len() {
        return Err(Error::Index {
            index: target,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vector = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = probs.iter().sum();
    let log_sum = libm::log(sum);
    let loss = log_sum - (logits[target] - max);
    for p in probs.iter_mut() {
        *p /= sum;
    }
    probs[target] -= 1.0;
    Ok((loss.max(0.0), probs))
}
