use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::activations::{Activation, NActParams};
use crate::error::{Error, Result};
use crate::layers::{lipschitz_ratio, DenseAccum, DenseLayer, LayerKind, Mode};
use crate::linalg::Matrix;

/// Default factor between N-activation parameters and the values the
/// optimizer sees; see [`Network::nact_scale`].
pub const NACT_LR_SCALE: f64 = 0.1;

/// One stage of a network.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Act(Activation),
}

impl Layer {
    pub fn as_dense(&self) -> Option<&DenseLayer> {
        match self {
            Self::Dense(d) => Some(d),
            Self::Act(_) => None,
        }
    }

    pub fn as_act(&self) -> Option<&Activation> {
        match self {
            Self::Act(a) => Some(a),
            Self::Dense(_) => None,
        }
    }
}

/// A feed-forward network of dense layers and activation stages.
///
/// Derived layer state (AOL rescaling, SOC skew part, CPL norm estimates) is
/// cached. Obtaining the layers through [`Network::layers_mut`] marks the
/// cache stale and invalidates every outstanding [`Tape`]; call
/// [`Network::refresh`] before the next forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    output_dim: usize,
    input_offset: Option<Vec<f64>>,
    layers: Vec<Layer>,
    nact_scale: f64,
    version: u64,
    dirty: bool,
}

/// Values recorded by a forward pass for use by [`Network::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    version: u64,
    mode: Mode,
    /// Input of every layer, plus the final output.
    values: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("tape always holds the output")
    }

    pub fn layer_input(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Gradient of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrad {
    Dense { weight: Matrix, bias: Vec<f64> },
    /// Per-channel `(d theta1, d theta2)` with respect to the optimizer's
    /// rescaled parameters.
    NAct(Vec<[f64; 2]>),
    None,
}

/// Gradients of all network parameters, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for g in &self.layers {
            match g {
                LayerGrad::Dense { weight, bias } => {
                    for v in weight.as_slice().iter().chain(bias) {
                        m = m.max(v.abs());
                    }
                }
                LayerGrad::NAct(p) => {
                    for v in p.iter().flatten() {
                        m = m.max(v.abs());
                    }
                }
                LayerGrad::None => {}
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
enum Slot {
    Dense(DenseAccum),
    NAct(Vec<[f64; 2]>),
    None,
}

/// Sums gradients over several examples before converting them once.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    version: u64,
    slots: Vec<Slot>,
    count: usize,
}

impl GradAccumulator {
    pub fn count(&self) -> usize {
        self.count
    }
}

impl Network {
    /// Builds a network, checking that consecutive dimensions agree.
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let output_dim = check_dims(input_dim, &layers)?;
        Ok(Self {
            input_dim,
            output_dim,
            input_offset: None,
            layers,
            nact_scale: NACT_LR_SCALE,
            version: 0,
            dirty: false,
        })
    }

    /// The identity map on `dim` inputs.
    pub fn empty(dim: usize) -> Self {
        Self::new(dim, Vec::new()).expect("empty network is always valid")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the layers. Marks derived state stale and
    /// invalidates existing tapes.
    pub fn layers_mut(&mut self) -> &mut Vec<Layer> {
        self.dirty = true;
        self.version += 1;
        &mut self.layers
    }

    /// Vector subtracted from every input before the first layer.
    pub fn input_offset(&self) -> Option<&[f64]> {
        self.input_offset.as_deref()
    }

    pub fn set_input_offset(&mut self, offset: Option<Vec<f64>>) -> Result<()> {
        if let Some(o) = &offset {
            if o.len() != self.input_dim {
                return Err(Error::ShapeMismatch { expected: self.input_dim, found: o.len() });
            }
        }
        self.input_offset = offset;
        self.version += 1;
        Ok(())
    }

    /// N-activation parameters are optimized in units of `theta / nact_scale`,
    /// so their gradients carry a factor `nact_scale`.
    pub fn nact_scale(&self) -> f64 {
        self.nact_scale
    }

    pub fn set_nact_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("nact scale must be positive, got {scale}")));
        }
        self.nact_scale = scale;
        Ok(())
    }

    /// Counter bumped on every parameter change.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_stale(&self) -> bool {
        self.dirty
    }

    /// Re-validates shapes and recomputes all derived layer state, including
    /// CPL spectral-norm estimates.
    pub fn refresh(&mut self) -> Result<()> {
        self.refresh_derived()?;
        self.update_spectral_norms();
        Ok(())
    }

    /// Like [`Self::refresh`] but keeps CPL norm estimates fixed.
    pub(crate) fn refresh_derived(&mut self) -> Result<()> {
        self.output_dim = check_dims(self.input_dim, &self.layers)?;
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    d.params().validate()?;
                    d.refresh();
                }
                Layer::Act(Activation::NAct(p)) => {
                    if let Some(bad) = p.iter().find(|p| !p.is_valid()) {
                        return Err(Error::InvalidNetwork(format!("invalid N-activation parameters {bad:?}")));
                    }
                }
                Layer::Act(_) => {}
            }
        }
        self.dirty = false;
        Ok(())
    }

    /// Runs power iteration for every CPL layer; returns the estimates.
    pub fn update_spectral_norms(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Dense(d) = layer {
                if d.kind() == LayerKind::Cpl {
                    out.push(d.update_spectral_norm());
                }
            }
        }
        out
    }

    fn check_ready(&self, x: &[f64]) -> Result<()> {
        if self.dirty {
            return Err(Error::StaleCache);
        }
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch { expected: self.input_dim, found: x.len() });
        }
        Ok(())
    }

    fn shifted_input(&self, x: &[f64]) -> Vec<f64> {
        match &self.input_offset {
            Some(o) => x.iter().zip(o).map(|(a, b)| a - b).collect(),
            None => x.to_vec(),
        }
    }

    /// Forward pass recording the values needed for [`Self::backward`].
    pub fn forward(&self, x: &[f64], mode: Mode) -> Result<(Vec<f64>, Tape)> {
        self.check_ready(x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(self.shifted_input(x));
        for layer in &self.layers {
            let cur = values.last().expect("non-empty");
            let next = match layer {
                Layer::Dense(d) => d.forward(cur, mode),
                Layer::Act(a) => a.forward(cur),
            };
            values.push(next);
        }
        let out = values.last().expect("non-empty").clone();
        Ok((out, Tape { version: self.version, mode, values }))
    }

    /// Forward pass without a tape.
    pub fn apply(&self, x: &[f64], mode: Mode) -> Result<Vec<f64>> {
        self.check_ready(x)?;
        let mut cur = self.shifted_input(x);
        for layer in &self.layers {
            cur = match layer {
                Layer::Dense(d) => d.forward(&cur, mode),
                Layer::Act(a) => a.forward(&cur),
            };
        }
        Ok(cur)
    }

    /// Inference-mode forward pass.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(x, Mode::Eval)
    }

    /// Evaluates a scalar network `R -> R`.
    pub fn eval_scalar(&self, x: f64) -> Result<f64> {
        if self.input_dim != 1 || self.output_dim != 1 {
            return Err(Error::ShapeMismatch { expected: 1, found: self.input_dim.max(self.output_dim) });
        }
        Ok(self.predict(&[x])?[0])
    }

    pub fn new_accumulator(&self) -> GradAccumulator {
        let slots = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => Slot::Dense(d.new_accum()),
                Layer::Act(Activation::NAct(p)) => Slot::NAct(vec![[0.0; 2]; p.len()]),
                Layer::Act(_) => Slot::None,
            })
            .collect();
        GradAccumulator { version: self.version, slots, count: 0 }
    }

    fn check_tape(&self, version: u64) -> Result<()> {
        if version != self.version {
            return Err(Error::StaleTape { tape: version, network: self.version });
        }
        if self.dirty {
            return Err(Error::StaleCache);
        }
        Ok(())
    }

    /// Adds the parameter gradients of one example into `acc` and returns
    /// the gradient with respect to the input.
    pub fn accumulate(&self, tape: &Tape, upstream: &[f64], acc: &mut GradAccumulator) -> Result<Vec<f64>> {
        self.check_tape(tape.version)?;
        self.check_tape(acc.version)?;
        if upstream.len() != self.output_dim {
            return Err(Error::ShapeMismatch { expected: self.output_dim, found: upstream.len() });
        }
        let mut g = upstream.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &tape.values[i];
            g = match (layer, &mut acc.slots[i]) {
                (Layer::Dense(d), Slot::Dense(a)) => d.accumulate(x, &g, tape.mode, a),
                (Layer::Act(act), Slot::NAct(p)) => act.backward(x, &g, Some(p)),
                (Layer::Act(act), _) => act.backward(x, &g, None),
                (Layer::Dense(_), _) => return Err(Error::Internal("accumulator layout mismatch".into())),
            };
        }
        acc.count += 1;
        Ok(g)
    }

    /// Converts accumulated sums into parameter gradients, multiplied by
    /// `scale` (e.g. `1 / batch_size`).
    pub fn finish(&self, acc: GradAccumulator, scale: f64) -> Result<Gradients> {
        self.check_tape(acc.version)?;
        let layers = self
            .layers
            .iter()
            .zip(acc.slots)
            .map(|(layer, slot)| match (layer, slot) {
                (Layer::Dense(d), Slot::Dense(mut a)) => {
                    a.weight.scale(scale);
                    for b in &mut a.bias {
                        *b *= scale;
                    }
                    let (weight, bias) = d.finish(a);
                    LayerGrad::Dense { weight, bias }
                }
                (_, Slot::NAct(mut p)) => {
                    let s = scale * self.nact_scale;
                    for v in p.iter_mut().flatten() {
                        *v *= s;
                    }
                    LayerGrad::NAct(p)
                }
                _ => LayerGrad::None,
            })
            .collect();
        Ok(Gradients { layers })
    }

    /// Single-example backward pass: parameter gradients and the input
    /// gradient.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut acc = self.new_accumulator();
        let dx = self.accumulate(tape, upstream, &mut acc)?;
        Ok((self.finish(acc, 1.0)?, dx))
    }

    /// Number of dense layers.
    pub fn linear_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::Dense(_))).count()
    }

    /// Activation stages that are not the identity map.
    pub fn nontrivial_activations(&self) -> impl Iterator<Item = &Activation> {
        self.layers.iter().filter_map(Layer::as_act).filter(|a| match a {
            Activation::NAct(p) => p.iter().any(|p| !p.is_identity()),
            Activation::Identity => false,
            _ => true,
        })
    }

    /// Whether every dense layer uses a 1-Lipschitz parameterization.
    pub fn is_constrained(&self) -> bool {
        self.layers.iter().filter_map(Layer::as_dense).all(|d| d.kind().is_constrained())
    }

    /// Largest `||f(x) - f(y)|| / ||x - y||` over random pairs drawn from
    /// `[-radius, radius]^n`.
    pub fn lipschitz_audit<R: Rng + ?Sized>(&self, trials: usize, radius: f64, rng: &mut R) -> Result<f64> {
        if trials == 0 {
            return Err(Error::Precondition("audit needs at least one trial".into()));
        }
        let n = self.input_dim;
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let x: Vec<f64> = (0..n).map(|_| radius * rng.random_range(-1.0..1.0)).collect();
            let step = radius * [1e-4, 1e-2, 1.0][rng.random_range(0..3)];
            let y: Vec<f64> = x.iter().map(|v| v + step * rng.random_range(-1.0..1.0)).collect();
            if x == y {
                continue;
            }
            let fx = self.apply(&x, Mode::Eval)?;
            let fy = self.apply(&y, Mode::Eval)?;
            worst = worst.max(lipschitz_ratio(&fx, &fy, &x, &y));
        }
        Ok(worst)
    }

    /// Concatenated branch pattern of every non-smooth stage at `x`.
    pub fn branch_signature(&self, x: &[f64]) -> Result<Vec<u8>> {
        let (_, tape) = self.forward(x, Mode::Train)?;
        let mut sig = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let input = &tape.values[i];
            match layer {
                Layer::Dense(d) => d.branch_signature(input, &mut sig),
                Layer::Act(a) => {
                    a.branch_signature(input, &mut sig);
                    if let Activation::NAct(p) = a {
                        sig.extend(p.iter().map(|p| u8::from(p.theta1 > p.theta2)));
                    }
                }
            }
        }
        Ok(sig)
    }

    /// Mutable access to one N-activation channel for optimizers.
    pub(crate) fn nact_params_mut(&mut self, layer: usize) -> Option<&mut Vec<NActParams>> {
        match &mut self.layers[layer] {
            Layer::Act(Activation::NAct(p)) => Some(p),
            _ => None,
        }
    }

    pub(crate) fn dense_mut(&mut self, layer: usize) -> Option<&mut DenseLayer> {
        match &mut self.layers[layer] {
            Layer::Dense(d) => Some(d),
            _ => None,
        }
    }

    pub(crate) fn touch(&mut self) {
        self.version += 1;
    }
}

fn check_dims(input_dim: usize, layers: &[Layer]) -> Result<usize> {
    let mut width = input_dim;
    for layer in layers {
        match layer {
            Layer::Dense(d) => {
                if d.in_dim() != width {
                    return Err(Error::ShapeMismatch { expected: width, found: d.in_dim() });
                }
                width = d.out_dim();
            }
            Layer::Act(a) => {
                if let Some(n) = a.fixed_dim() {
                    if n != width {
                        return Err(Error::ShapeMismatch { expected: width, found: n });
                    }
                }
            }
        }
    }
    Ok(width)
}
