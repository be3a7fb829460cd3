use alloc::vec::Vec;

use rand::Rng;

use super::{lipschitz_ratio, spectral_norm, DenseLayer, DenseParams, LayerKind, Mode, PowerIterState};
use crate::error::{Error, Result};

/// Result of an empirical Lipschitz audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    /// Largest observed `||f(x) - f(y)|| / ||x - y||`.
    pub empirical: f64,
    /// Spectral norm of the effective weight (AOL and Linear layers only).
    pub spectral: Option<f64>,
}

/// Samples `trials` random input pairs and reports the largest distance
/// ratio. Pairs mix far-apart points with small perturbations at several
/// scales so that CPL kinks are crossed as well as avoided.
pub fn lipschitz_audit<R: Rng + ?Sized>(params: &DenseParams, trials: usize, rng: &mut R) -> Result<AuditReport> {
    if trials == 0 {
        return Err(Error::Precondition("audit needs at least one trial".into()));
    }
    let layer = DenseLayer::new(params.clone())?;
    let n = layer.in_dim();
    let mut empirical: f64 = 0.0;
    for _ in 0..trials {
        let scale = [0.1, 1.0, 10.0][rng.random_range(0..3)];
        let x: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let step = [1e-3, 0.1, 1.0, 10.0][rng.random_range(0..4)];
        let y: Vec<f64> = x.iter().map(|v| v + step * rng.random_range(-1.0..1.0)).collect();
        if x == y {
            continue;
        }
        let fx = layer.forward(&x, Mode::Eval);
        let fy = layer.forward(&y, Mode::Eval);
        empirical = empirical.max(lipschitz_ratio(&fx, &fy, &x, &y));
    }
    let spectral = layer.effective_weight().map(|w| {
        let mut state = PowerIterState::new(1000, 1e-14);
        spectral_norm(w, &mut state)
    });
    let spectral = match params.kind {
        LayerKind::Aol | LayerKind::Linear => spectral,
        _ => None,
    };
    Ok(AuditReport { empirical, spectral })
}
