use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch { expected: target.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Offset cross-entropy: `T * CE(softmax((s - offset e_y) / T), y)`.
///
/// Returns the loss and its gradient with respect to the scores. With
/// `offset = 0` and `temperature = 1` this is the standard cross-entropy.
pub fn offset_ce_loss(scores: &[f64], label: usize, offset: f64, temperature: f64) -> Result<(f64, Vec<f64>)> {
    if label >= scores.len() {
        return Err(Error::InvalidLabel { label, classes: scores.len() });
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    let z: Vec<f64> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| (if i == label { s - offset } else { s }) / temperature)
        .collect();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|&v| libm::exp(v - m)).sum();
    let lse = m + libm::log(sum);
    let loss = temperature * (lse - z[label]);
    let grad = z
        .iter()
        .enumerate()
        .map(|(i, &v)| libm::exp(v - lse) - if i == label { 1.0 } else { 0.0 })
        .collect();
    Ok((loss, grad))
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}
