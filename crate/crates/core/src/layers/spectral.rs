use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{norm, Matrix};

/// Warm-startable power-iteration state for estimating `||P||_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIterState {
    /// Current right singular vector estimate; empty until the first run.
    pub u: Vec<f64>,
    /// Iteration cap per call.
    pub iters: usize,
    /// Relative-change stopping tolerance.
    pub tol: f64,
    /// Relative change of the estimate in the last iteration of the last call.
    pub residual: f64,
    /// Iterations used by the last call.
    pub used: usize,
}

impl Default for PowerIterState {
    fn default() -> Self {
        Self::new(100, 1e-10)
    }
}

impl PowerIterState {
    pub fn new(iters: usize, tol: f64) -> Self {
        Self { u: Vec::new(), iters, tol, residual: f64::INFINITY, used: 0 }
    }

    pub fn converged(&self) -> bool {
        self.residual < self.tol
    }
}

/// Power iteration on `P^T P`, warm-started from `state.u`.
///
/// Returns `||P u||` for the final unit vector `u`, which never exceeds the
/// true spectral norm. A zero matrix yields 0.
pub fn spectral_norm(p: &Matrix, state: &mut PowerIterState) -> f64 {
    let n = p.cols();
    if n == 0 || p.rows() == 0 {
        state.residual = 0.0;
        return 0.0;
    }
    if state.u.len() != n || !(norm(&state.u) > 0.0) {
        state.u = vec![1.0 / libm::sqrt(n as f64); n];
    }
    let mut sigma = norm(&p.matvec(&state.u));
    if sigma == 0.0 {
        // Start vector in the null space; try the coordinate axes.
        match (0..n).find(|&c| (0..p.rows()).any(|r| p[(r, c)] != 0.0)) {
            Some(i) => {
                state.u = vec![0.0; n];
                state.u[i] = 1.0;
                sigma = norm(&p.matvec(&state.u));
            }
            None => {
                state.residual = 0.0;
                state.used = 0;
                return 0.0;
            }
        }
    }
    state.residual = f64::INFINITY;
    state.used = 0;
    for _ in 0..state.iters {
        let v = p.tr_matvec(&p.matvec(&state.u));
        let len = norm(&v);
        if len == 0.0 {
            break;
        }
        state.u = v.into_iter().map(|x| x / len).collect();
        let next = norm(&p.matvec(&state.u));
        state.used += 1;
        state.residual = (next - sigma).abs() / next.max(f64::MIN_POSITIVE);
        sigma = next;
        if state.residual < state.tol {
            break;
        }
    }
    sigma
}
