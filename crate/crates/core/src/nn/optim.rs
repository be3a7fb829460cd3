use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use super::init::NActInit;
use super::network::{Gradients, LayerGrad, Network, NACT_LR_SCALE};
use crate::error::{Error, Result};
use crate::layers::LayerKind;
use crate::linalg::Matrix;

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    /// Linear warm-up from `peak / 25` over the first 30% of steps, then a
    /// cosine decay to `peak / 1e4`.
    OneCycle,
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    OffsetCe,
}

/// Fraction of steps spent warming up under [`Schedule::OneCycle`].
pub const WARMUP_FRACTION: f64 = 0.3;
const WARMUP_DIV: f64 = 25.0;
const FINAL_DIV: f64 = 1e4;

/// Default robustness radius, `36 / 255`.
pub const DEFAULT_EPSILON: f64 = 36.0 / 255.0;

/// Optimizer, schedule, loss and initialization settings for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    /// Margin subtracted from the true-class score; `None` means
    /// `2 sqrt(2) epsilon`.
    pub offset: Option<f64>,
    pub temperature: f64,
    pub epsilon: f64,
    pub nact_init: NActInit,
    /// `theta1` used by [`NActInit::AbsId`] on absolute-value channels.
    pub absid_theta1: f64,
    pub nact_lr_scale: f64,
    /// Subtract the training-set mean from every input.
    pub subtract_mean: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            nesterov: true,
            schedule: Schedule::Constant,
            epochs: 1,
            batch_size: 256,
            loss: LossKind::OffsetCe,
            offset: None,
            temperature: 0.25,
            epsilon: DEFAULT_EPSILON,
            nact_init: NActInit::AbsId,
            absid_theta1: -100.0,
            nact_lr_scale: NACT_LR_SCALE,
            subtract_mean: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for a classifier with the given layer type: one-cycle
    /// schedule, offset cross-entropy and the per-layer default peak rate.
    pub fn classification(kind: LayerKind) -> Self {
        Self { learning_rate: default_learning_rate(kind), schedule: Schedule::OneCycle, ..Self::default() }
    }

    /// Effective offset for [`LossKind::OffsetCe`].
    pub fn effective_offset(&self) -> f64 {
        self.offset.unwrap_or(2.0 * SQRT_2 * self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.nact_lr_scale > 0.0 && self.nact_lr_scale.is_finite()) {
            return bad("nact_lr_scale must be positive");
        }
        if !self.effective_offset().is_finite() || !self.absid_theta1.is_finite() {
            return bad("offset and absid_theta1 must be finite");
        }
        Ok(())
    }

    /// Learning rate at `step` (0-based) of `total` optimizer steps.
    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        schedule_rate(self.schedule, self.learning_rate, step, total)
    }
}

/// Default peak learning rate per layer type.
pub fn default_learning_rate(kind: LayerKind) -> f64 {
    match kind {
        LayerKind::Aol => libm::pow(10.0, -1.6),
        LayerKind::Cpl => libm::pow(10.0, -0.4),
        LayerKind::Soc => libm::pow(10.0, -1.0),
        LayerKind::Linear => 0.01,
    }
}

/// Learning rate of `schedule` with peak `peak` at `step` of `total`.
pub fn schedule_rate(schedule: Schedule, peak: f64, step: usize, total: usize) -> f64 {
    match schedule {
        Schedule::Constant => peak,
        Schedule::OneCycle => {
            if total <= 1 {
                return peak;
            }
            let last = (total - 1) as f64;
            let warm = libm::round(WARMUP_FRACTION * last).max(1.0);
            let t = step as f64;
            let start = peak / WARMUP_DIV;
            if t <= warm {
                start + (peak - start) * t / warm
            } else {
                let end = peak / FINAL_DIV;
                let p = ((t - warm) / (last - warm).max(1.0)).min(1.0);
                end + 0.5 * (peak - end) * (1.0 + libm::cos(PI * p))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Velocity {
    Dense { weight: Matrix, bias: Vec<f64> },
    NAct(Vec<[f64; 2]>),
    None,
}

/// SGD with (optionally Nesterov) momentum.
///
/// Velocities start at zero. The Nesterov update is `v <- mu v + g`,
/// `p <- p - lr (g + mu v)`. N-activation parameters are stepped in units of
/// `theta / nact_scale`.
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    nesterov: bool,
    velocity: Vec<Velocity>,
}

impl Sgd {
    pub fn new(momentum: f64, nesterov: bool) -> Self {
        Self { momentum, nesterov, velocity: Vec::new() }
    }

    pub fn from_config(config: &TrainConfig) -> Self {
        Self::new(config.momentum, config.nesterov)
    }

    fn init_velocity(&mut self, grads: &Gradients) {
        self.velocity = grads
            .layers
            .iter()
            .map(|g| match g {
                LayerGrad::Dense { weight, bias } => Velocity::Dense {
                    weight: Matrix::zeros(weight.rows(), weight.cols()),
                    bias: alloc::vec![0.0; bias.len()],
                },
                LayerGrad::NAct(p) => Velocity::NAct(alloc::vec![[0.0; 2]; p.len()]),
                LayerGrad::None => Velocity::None,
            })
            .collect();
    }

    /// Applies one update and refreshes the network's derived state.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(Error::ShapeMismatch { expected: net.layers().len(), found: grads.layers.len() });
        }
        if self.velocity.len() != grads.layers.len() {
            self.init_velocity(grads);
        }
        let (mu, nesterov) = (self.momentum, self.nesterov);
        let scale = net.nact_scale();
        for (i, (g, v)) in grads.layers.iter().zip(&mut self.velocity).enumerate() {
            match (g, v) {
                (LayerGrad::Dense { weight, bias }, Velocity::Dense { weight: vw, bias: vb }) => {
                    let layer = net.dense_mut(i).ok_or_else(|| Error::Internal("gradient layout mismatch".into()))?;
                    let params = layer.params_mut();
                    update(params.weight.as_mut_slice(), weight.as_slice(), vw.as_mut_slice(), lr, mu, nesterov);
                    update(&mut params.bias, bias, vb, lr, mu, nesterov);
                }
                (LayerGrad::NAct(g), Velocity::NAct(v)) => {
                    let params = net.nact_params_mut(i).ok_or_else(|| Error::Internal("gradient layout mismatch".into()))?;
                    for ((p, g), v) in params.iter_mut().zip(g).zip(v.iter_mut()) {
                        let mut delta = [0.0; 2];
                        update(&mut delta, g, v, lr, mu, nesterov);
                        p.theta2 += scale * delta[1];
                        if !p.abs_mode {
                            p.theta1 += scale * delta[0];
                        }
                    }
                }
                (LayerGrad::None, _) => {}
                _ => return Err(Error::Internal("velocity layout mismatch".into())),
            }
        }
        net.touch();
        net.refresh()
    }
}

fn update(p: &mut [f64], g: &[f64], v: &mut [f64], lr: f64, mu: f64, nesterov: bool) {
    for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = mu * *v + g;
        let step = if nesterov { g + mu * *v } else { *v };
        *p -= lr * step;
    }
}
