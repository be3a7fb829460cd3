use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::network::{Layer, Network};
use crate::activations::{Activation, NActParams};
use crate::error::{Error, Result};
use crate::layers::{DenseLayer, DenseParams, LayerKind};
use crate::linalg::Matrix;

/// Initialization strategy for N-activation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NActInit {
    /// Alternating absolute value (`theta1` very negative, `theta2 = 0`) and
    /// identity (`theta1 = theta2 = 0`) channels.
    AbsId,
    /// Identity on every channel.
    Zero,
    /// `theta1 = -10^u1`, `theta2 = 10^u2` with `u1, u2 ~ U[-5, 0]`.
    Random,
}

impl NActInit {
    pub fn name(self) -> &'static str {
        match self {
            Self::AbsId => "absid",
            Self::Zero => "zero",
            Self::Random => "random",
        }
    }
}

/// Parameters of channel `channel` under `strategy`. `absid_theta1` is the
/// `theta1` used on the absolute-value channels of [`NActInit::AbsId`].
pub fn init_nact<R: Rng + ?Sized>(strategy: NActInit, channel: usize, absid_theta1: f64, rng: &mut R) -> NActParams {
    match strategy {
        NActInit::AbsId if channel.is_multiple_of(2) => NActParams::new(absid_theta1, 0.0),
        NActInit::AbsId | NActInit::Zero => NActParams::IDENTITY,
        NActInit::Random => {
            let u1: f64 = rng.random_range(-5.0..=0.0);
            let u2: f64 = rng.random_range(-5.0..=0.0);
            NActParams::new(-libm::pow(10.0, u1), libm::pow(10.0, u2))
        }
    }
}

/// Exact alternating absolute-value / identity stage of width `width`.
pub fn alternating_abs_identity(width: usize) -> Activation {
    Activation::NAct((0..width).map(|c| if c % 2 == 0 { NActParams::ABS } else { NActParams::IDENTITY }).collect())
}

/// Random dense parameters mapping `in_dim -> out_dim`.
///
/// Weights and biases are uniform in `+-1 / sqrt(in_dim)`. CPL layers use a
/// square hidden size and zero bias.
pub fn init_dense<R: Rng + ?Sized>(kind: LayerKind, in_dim: usize, out_dim: usize, rng: &mut R) -> Result<DenseParams> {
    if in_dim == 0 || out_dim == 0 {
        return Err(Error::InvalidConfig("layer dimensions must be positive".into()));
    }
    if matches!(kind, LayerKind::Cpl | LayerKind::Soc) && in_dim != out_dim {
        return Err(Error::ShapeMismatch { expected: in_dim, found: out_dim });
    }
    let bound = 1.0 / libm::sqrt(in_dim as f64);
    let mut uniform = || rng.random_range(-bound..bound);
    let weight = Matrix::from_fn(out_dim, in_dim, |_, _| uniform());
    let bias = match kind {
        LayerKind::Cpl => vec![0.0; out_dim],
        _ => (0..out_dim).map(|_| uniform()).collect(),
    };
    DenseParams::new(kind, weight, bias)
}

/// Activation family of a generated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationChoice {
    NAct(NActInit),
    MaxMin,
    Abs,
    Relu,
    Identity,
}

impl ActivationChoice {
    pub fn build<R: Rng + ?Sized>(self, width: usize, absid_theta1: f64, rng: &mut R) -> Activation {
        match self {
            Self::NAct(s) => Activation::NAct((0..width).map(|c| init_nact(s, c, absid_theta1, rng)).collect()),
            Self::MaxMin => Activation::MaxMin,
            Self::Abs => Activation::Abs,
            Self::Relu => Activation::Relu,
            Self::Identity => Activation::Identity,
        }
    }
}

/// Shape of a fully connected network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub width: usize,
    /// Number of dense layers (at least 1).
    pub depth: usize,
    pub output_dim: usize,
    /// Kind of the square hidden layers. Layers that change the width use
    /// AOL, or `Linear` when this is `Linear`.
    pub layer_kind: LayerKind,
    pub activation: ActivationChoice,
    pub absid_theta1: f64,
}

/// Builds `dense (act dense)*` with `depth` dense layers.
pub fn build_mlp<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Network> {
    if spec.depth == 0 {
        return Err(Error::InvalidConfig("depth must be at least 1".into()));
    }
    if spec.activation == ActivationChoice::MaxMin && spec.depth > 1 && !spec.width.is_multiple_of(2) {
        return Err(Error::InvalidConfig("MaxMin needs an even width".into()));
    }
    let mut layers = Vec::with_capacity(2 * spec.depth - 1);
    for i in 0..spec.depth {
        let in_dim = if i == 0 { spec.input_dim } else { spec.width };
        let out_dim = if i + 1 == spec.depth { spec.output_dim } else { spec.width };
        let kind = match spec.layer_kind {
            LayerKind::Linear => LayerKind::Linear,
            k if in_dim == out_dim => k,
            _ => LayerKind::Aol,
        };
        layers.push(Layer::Dense(DenseLayer::new(init_dense(kind, in_dim, out_dim, rng)?)?));
        if i + 1 < spec.depth {
            layers.push(Layer::Act(spec.activation.build(spec.width, spec.absid_theta1, rng)));
        }
    }
    Network::new(spec.input_dim, layers)
}

/// Copy of `net` with every N-activation stage replaced by an exact
/// alternating absolute-value / identity stage.
pub fn with_alternating_abs_identity(net: &Network) -> Result<Network> {
    let layers = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Act(Activation::NAct(p)) => Layer::Act(alternating_abs_identity(p.len())),
            other => other.clone(),
        })
        .collect();
    let mut out = Network::new(net.input_dim(), layers)?;
    out.set_input_offset(net.input_offset().map(<[f64]>::to_vec))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn absid_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(init_nact(NActInit::AbsId, 0, -100.0, &mut rng), NActParams::new(-100.0, 0.0));
        assert_eq!(init_nact(NActInit::AbsId, 1, -100.0, &mut rng), NActParams::IDENTITY);
        assert_eq!(init_nact(NActInit::AbsId, 4, -100.0, &mut rng), NActParams::new(-100.0, 0.0));
    }

    #[test]
    fn zero_is_identity_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in 0..5 {
            assert_eq!(init_nact(NActInit::Zero, c, -100.0, &mut rng), NActParams::IDENTITY);
        }
    }

    #[test]
    fn random_is_seeded_and_in_range() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200).map(|c| init_nact(NActInit::Random, c, -100.0, &mut rng)).collect::<Vec<_>>()
        };
        let a = draw(11);
        assert_eq!(a, draw(11));
        assert_ne!(a, draw(12));
        for p in a {
            assert!(p.theta1 > -1.0 - 1e-12 && p.theta1 <= -1e-5 + 1e-18, "{p:?}");
            assert!(p.theta2 >= 1e-5 - 1e-18 && p.theta2 < 1.0 + 1e-12, "{p:?}");
        }
    }

    #[test]
    fn mlp_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = MlpSpec {
            input_dim: 3,
            width: 6,
            depth: 4,
            output_dim: 2,
            layer_kind: LayerKind::Soc,
            activation: ActivationChoice::MaxMin,
            absid_theta1: -100.0,
        };
        let net = build_mlp(&spec, &mut rng).unwrap();
        let kinds: Vec<_> = net.layers().iter().filter_map(Layer::as_dense).map(|d| d.kind()).collect();
        assert_eq!(kinds, vec![LayerKind::Aol, LayerKind::Soc, LayerKind::Soc, LayerKind::Aol]);
        assert_eq!((net.input_dim(), net.output_dim()), (3, 2));
        assert!(build_mlp(&MlpSpec { width: 5, ..spec }, &mut rng).is_err());
    }
}
