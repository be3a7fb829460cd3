//! Scalar programs: the compiler's intermediate form.
//!
//! A program is a chain of scalar-to-scalar stages. It can be evaluated
//! directly and laid out as a network whose hidden width never exceeds 2.

use alloc::vec;
use alloc::vec::Vec;

use crate::activations::{n_act, Activation, NActParams};
use crate::error::Result;
use crate::layers::{DenseLayer, DenseParams, LayerKind};
use crate::linalg::Matrix;
use crate::nn::{Layer, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Stage {
    /// `y = scale * x + shift`.
    Affine { scale: f64, shift: f64 },
    /// `y = contract . lanes(expand * x + expand_bias) + contract_bias`.
    Pair { expand: [f64; 2], expand_bias: [f64; 2], lanes: [NActParams; 2], contract: [f64; 2], contract_bias: f64 },
    /// `y = N(x)`.
    Scalar(NActParams),
}

impl Stage {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Self::Affine { scale, shift } => scale * x + shift,
            Self::Pair { expand, expand_bias, lanes, contract, contract_bias } => {
                let a = n_act(expand[0] * x + expand_bias[0], &lanes[0]);
                let b = n_act(expand[1] * x + expand_bias[1], &lanes[1]);
                contract[0] * a + contract[1] * b + contract_bias
            }
            Self::Scalar(p) => n_act(x, p),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Program {
    pub stages: Vec<Stage>,
}

impl Program {
    pub fn eval(&self, x: f64) -> f64 {
        self.stages.iter().fold(x, |v, s| s.apply(v))
    }

    pub fn push(&mut self, stage: Stage) {
        self.stages.push(stage);
    }

    pub fn extend(&mut self, other: Program) {
        self.stages.extend(other.stages);
    }

    /// Moves every `Affine` with unit-magnitude scale backwards through the
    /// N-activations in front of it, using
    /// `N(y; t) + d = N(y - d; t - d)` and `-N(y; t) = N(-y; -t)`.
    /// Negations cannot pass absolute-value stages. Adjacent affine stages
    /// are merged and identity stages dropped.
    pub fn normalize(&mut self) {
        loop {
            let mut changed = false;
            let mut i = 1;
            while i < self.stages.len() {
                match (self.stages[i - 1], self.stages[i]) {
                    (Stage::Affine { scale: a, shift: b }, Stage::Affine { scale: c, shift: d }) => {
                        self.stages[i - 1] = Stage::Affine { scale: c * a, shift: c * b + d };
                        self.stages.remove(i);
                        changed = true;
                        continue;
                    }
                    (Stage::Scalar(p), Stage::Affine { scale: 1.0, shift }) => {
                        let moved = NActParams { theta1: p.theta1 - shift, theta2: p.theta2 - shift, ..p };
                        self.stages[i - 1] = Stage::Affine { scale: 1.0, shift: -shift };
                        self.stages[i] = Stage::Scalar(moved);
                        changed = true;
                    }
                    (Stage::Scalar(p), Stage::Affine { scale, shift }) if scale == -1.0 && !p.abs_mode => {
                        let moved = NActParams::new(-p.theta1 - shift, -p.theta2 - shift);
                        self.stages[i - 1] = Stage::Affine { scale: -1.0, shift: -shift };
                        self.stages[i] = Stage::Scalar(moved);
                        changed = true;
                    }
                    _ => {}
                }
                i += 1;
            }
            let before = self.stages.len();
            self.stages.retain(|s| !matches!(s, Stage::Affine { scale, shift } if *scale == 1.0 && *shift == 0.0));
            changed |= self.stages.len() != before;
            if !changed {
                break;
            }
        }
    }

    /// Lays the program out as a network of `Linear` layers and N-activation
    /// stages. Consecutive affine maps are folded into single layers, so each
    /// `Pair` costs one 2-row layer and each scalar stage directly after
    /// another scalar stage costs none.
    pub fn to_network(&self) -> Result<Network> {
        // Pending affine read-out `w . h + b` of the current hidden vector h.
        let mut w: Vec<f64> = vec![1.0];
        let mut b = 0.0;
        let mut layers = Vec::new();
        let is_identity = |w: &[f64], b: f64| w.len() == 1 && w[0] == 1.0 && b == 0.0;
        for stage in &self.stages {
            match *stage {
                Stage::Affine { scale, shift } => {
                    for v in &mut w {
                        *v *= scale;
                    }
                    b = scale * b + shift;
                }
                Stage::Pair { expand, expand_bias, lanes, contract, contract_bias } => {
                    let weight = Matrix::from_fn(2, w.len(), |r, c| expand[r] * w[c]);
                    let bias = vec![expand[0] * b + expand_bias[0], expand[1] * b + expand_bias[1]];
                    layers.push(linear(weight, bias)?);
                    layers.push(Layer::Act(Activation::NAct(lanes.to_vec())));
                    w = contract.to_vec();
                    b = contract_bias;
                }
                Stage::Scalar(p) => {
                    if !is_identity(&w, b) {
                        let n = w.len();
                        layers.push(linear(Matrix::from_vec(1, n, w)?, vec![b])?);
                    }
                    layers.push(Layer::Act(Activation::NAct(vec![p])));
                    w = vec![1.0];
                    b = 0.0;
                }
            }
        }
        if !is_identity(&w, b) {
            let n = w.len();
            layers.push(linear(Matrix::from_vec(1, n, w)?, vec![b])?);
        }
        Network::new(1, layers)
    }
}

fn linear(weight: Matrix, bias: Vec<f64>) -> Result<Layer> {
    Ok(Layer::Dense(DenseLayer::new(DenseParams::new(LayerKind::Linear, weight, bias)?)?))
}
