//! Scalar and paired activation functions with sub-gradients.
//!
//! Every map here is 1-Lipschitz. At kinks the sub-gradient of the branch to
//! the right of the kink is returned.

use alloc::vec::Vec;

use core::f64::consts::FRAC_1_SQRT_2;

/// Parameters of one N-activation channel.
///
/// With `abs_mode` set, `theta1` is ignored and treated as `-inf`; the
/// activation then equals `|x - theta2| - theta2`, i.e. the absolute value
/// when `theta2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NActParams {
    pub theta1: f64,
    pub theta2: f64,
    pub abs_mode: bool,
}

impl NActParams {
    pub const IDENTITY: Self = Self { theta1: 0.0, theta2: 0.0, abs_mode: false };
    pub const ABS: Self = Self { theta1: 0.0, theta2: 0.0, abs_mode: true };

    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2, abs_mode: false }
    }

    /// Absolute-value shaped activation with its kink at `theta2`.
    pub fn abs_at(theta2: f64) -> Self {
        Self { theta1: 0.0, theta2, abs_mode: true }
    }

    pub fn theta_min(&self) -> f64 {
        if self.abs_mode {
            f64::NEG_INFINITY
        } else {
            self.theta1.min(self.theta2)
        }
    }

    pub fn theta_max(&self) -> f64 {
        if self.abs_mode {
            self.theta2
        } else {
            self.theta1.max(self.theta2)
        }
    }

    pub fn is_valid(&self) -> bool {
        self.theta2.is_finite() && (self.abs_mode || self.theta1.is_finite())
    }

    /// True for the parameters that make the activation the identity map.
    pub fn is_identity(&self) -> bool {
        !self.abs_mode && self.theta1 == self.theta2
    }

    /// Which branch `x` falls in: 0 left, 1 middle, 2 right.
    pub fn branch(&self, x: f64) -> u8 {
        if x >= self.theta_max() {
            2
        } else if x >= self.theta_min() {
            1
        } else {
            0
        }
    }
}

/// `N(x; theta1, theta2)`.
#[inline]
pub fn n_act(x: f64, p: &NActParams) -> f64 {
    let hi = p.theta_max();
    if x >= hi {
        return x - 2.0 * hi;
    }
    let lo = p.theta_min();
    if x >= lo {
        -x
    } else {
        x - 2.0 * lo
    }
}

/// Partial derivatives `(d/dx, d/dtheta1, d/dtheta2)` of [`n_act`].
///
/// When `theta1 == theta2`, `theta1` is treated as the minimum and `theta2`
/// as the maximum.
#[inline]
pub fn n_act_grad(x: f64, p: &NActParams) -> (f64, f64, f64) {
    let theta1_is_max = !p.abs_mode && p.theta1 > p.theta2;
    match p.branch(x) {
        2 => {
            if theta1_is_max {
                (1.0, -2.0, 0.0)
            } else {
                (1.0, 0.0, -2.0)
            }
        }
        1 => (-1.0, 0.0, 0.0),
        _ => {
            if theta1_is_max {
                (1.0, 0.0, -2.0)
            } else {
                (1.0, -2.0, 0.0)
            }
        }
    }
}

/// `(max(x, y), min(x, y))`.
#[inline]
pub fn maxmin(x: f64, y: f64) -> (f64, f64) {
    if x >= y {
        (x, y)
    } else {
        (y, x)
    }
}

/// MaxMin written as `M sigma(M (x, y))` with `M = [[1, 1], [1, -1]] / sqrt 2`
/// and `sigma(a, b) = (a, |b|)`.
pub fn maxmin_as_abs_identity(x: f64, y: f64) -> (f64, f64) {
    let (a, b) = (FRAC_1_SQRT_2 * (x + y), FRAC_1_SQRT_2 * (x - y));
    let b = b.abs();
    (FRAC_1_SQRT_2 * (a + b), FRAC_1_SQRT_2 * (a - b))
}

/// Element-wise activations without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarActivation {
    Abs,
    Relu,
    Identity,
}

impl ScalarActivation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Abs => x.abs(),
            Self::Relu => x.max(0.0),
            Self::Identity => x,
        }
    }

    #[inline]
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Self::Abs => {
                if x >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Relu => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Identity => 1.0,
        }
    }
}

/// An activation stage of a network.
///
/// `NAct` carries one parameter set per channel. `MaxMin` sorts channel
/// pairs `(0, 1), (2, 3), ...`; an unpaired last channel passes through.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    NAct(Vec<NActParams>),
    MaxMin,
    Abs,
    Relu,
    Identity,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::NAct(_) => "nact",
            Self::MaxMin => "maxmin",
            Self::Abs => "abs",
            Self::Relu => "relu",
            Self::Identity => "identity",
        }
    }

    /// Channel count the stage is tied to, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            Self::NAct(p) => Some(p.len()),
            _ => None,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::NAct(params) => x.iter().zip(params).map(|(&v, p)| n_act(v, p)).collect(),
            Self::MaxMin => {
                let mut out = x.to_vec();
                for pair in out.chunks_exact_mut(2) {
                    let (hi, lo) = maxmin(pair[0], pair[1]);
                    pair[0] = hi;
                    pair[1] = lo;
                }
                out
            }
            Self::Abs => x.iter().map(|&v| v.abs()).collect(),
            Self::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
            Self::Identity => x.to_vec(),
        }
    }

    /// Propagates `upstream` back through the stage evaluated at `x`. For
    /// N-activations, parameter gradients `(d theta1, d theta2)` are added
    /// into `param_grads`.
    pub fn backward(
        &self,
        x: &[f64],
        upstream: &[f64],
        param_grads: Option<&mut [[f64; 2]]>,
    ) -> Vec<f64> {
        match self {
            Self::NAct(params) => {
                let mut dx = Vec::with_capacity(x.len());
                let mut sink = param_grads;
                for (i, ((&v, &g), p)) in x.iter().zip(upstream).zip(params).enumerate() {
                    let (gx, g1, g2) = n_act_grad(v, p);
                    dx.push(gx * g);
                    if let Some(acc) = sink.as_deref_mut() {
                        acc[i][0] += g1 * g;
                        acc[i][1] += g2 * g;
                    }
                }
                dx
            }
            Self::MaxMin => {
                let mut dx = upstream.to_vec();
                for (pair, xs) in dx.chunks_exact_mut(2).zip(x.chunks_exact(2)) {
                    if xs[0] < xs[1] {
                        pair.swap(0, 1);
                    }
                }
                dx
            }
            Self::Abs => scalar_backward(ScalarActivation::Abs, x, upstream),
            Self::Relu => scalar_backward(ScalarActivation::Relu, x, upstream),
            Self::Identity => upstream.to_vec(),
        }
    }

    /// Branch identifiers used to detect when a perturbation crosses a kink.
    pub fn branch_signature(&self, x: &[f64], out: &mut Vec<u8>) {
        match self {
            Self::NAct(params) => out.extend(x.iter().zip(params).map(|(&v, p)| p.branch(v))),
            Self::MaxMin => out.extend(x.chunks_exact(2).map(|p| u8::from(p[0] >= p[1]))),
            Self::Abs | Self::Relu => out.extend(x.iter().map(|&v| u8::from(v >= 0.0))),
            Self::Identity => {}
        }
    }
}

fn scalar_backward(kind: ScalarActivation, x: &[f64], upstream: &[f64]) -> Vec<f64> {
    x.iter().zip(upstream).map(|(&v, &g)| kind.grad(v) * g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::CpwlFunction;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const N_PARAMS: NActParams = NActParams { theta1: -0.5, theta2: 0.5, abs_mode: false };

    #[test]
    fn identity_parameters() {
        assert_eq!(n_act(0.0, &NActParams::IDENTITY), 0.0);
        for x in [-7.0, -0.3, 0.0, 2.5, 1e6] {
            assert_eq!(n_act(x, &NActParams::IDENTITY), x);
        }
    }

    #[test]
    fn n_function_parameters() {
        assert_eq!(n_act(2.0, &N_PARAMS), 1.0);
        let n = CpwlFunction::n_function();
        for i in -300..=300 {
            let x = i as f64 / 50.0;
            assert_eq!(n_act(x, &N_PARAMS), n.eval(x));
        }
    }

    #[test]
    fn abs_mode_is_absolute_value() {
        assert_eq!(n_act(-3.0, &NActParams::ABS), 3.0);
        for x in [-1e6, -2.0, 0.0, 0.1, 40.0] {
            assert_eq!(n_act(x, &NActParams::ABS), x.abs());
        }
        // Kink shifted to theta2.
        let p = NActParams::abs_at(1.5);
        assert_eq!(n_act(1.5, &p), -1.5);
        assert_eq!(n_act(4.0, &p), 1.0);
    }

    #[test]
    fn finite_large_negative_theta_acts_like_abs_on_bounded_inputs() {
        let p = NActParams::new(-100.0, 0.0);
        for x in [-50.0, -1.0, 0.0, 3.0, 50.0] {
            assert_eq!(n_act(x, &p), x.abs());
        }
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(n_act_grad(2.0, &N_PARAMS), (1.0, 0.0, -2.0));
        assert_eq!(n_act_grad(0.0, &N_PARAMS), (-1.0, 0.0, 0.0));
        assert_eq!(n_act_grad(-2.0, &N_PARAMS), (1.0, -2.0, 0.0));
        // Swapped order: theta1 is now the maximum.
        let swapped = NActParams::new(0.5, -0.5);
        assert_eq!(n_act_grad(2.0, &swapped), (1.0, -2.0, 0.0));
        assert_eq!(n_act_grad(-2.0, &swapped), (1.0, 0.0, -2.0));
        // Kinks take the right branch.
        assert_eq!(n_act_grad(0.5, &N_PARAMS), (1.0, 0.0, -2.0));
        assert_eq!(n_act_grad(-0.5, &N_PARAMS), (-1.0, 0.0, 0.0));
        // Ties route to theta2 on the right, theta1 on the left.
        let tie = NActParams::new(0.3, 0.3);
        assert_eq!(n_act_grad(1.0, &tie), (1.0, 0.0, -2.0));
        assert_eq!(n_act_grad(-1.0, &tie), (1.0, -2.0, 0.0));
        // abs mode never moves theta1.
        assert_eq!(n_act_grad(-1.0, &NActParams::ABS), (-1.0, 0.0, 0.0));
        assert_eq!(n_act_grad(1.0, &NActParams::ABS), (1.0, 0.0, -2.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 2000 {
            let p = NActParams::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let x: f64 = rng.random_range(-4.0..4.0);
            if (x - p.theta1).abs() < 1e-3 || (x - p.theta2).abs() < 1e-3 {
                continue;
            }
            let (gx, g1, g2) = n_act_grad(x, &p);
            let fd_x = (n_act(x + h, &p) - n_act(x - h, &p)) / (2.0 * h);
            let bump = |d1: f64, d2: f64| n_act(x, &NActParams::new(p.theta1 + d1, p.theta2 + d2));
            let fd_1 = (bump(h, 0.0) - bump(-h, 0.0)) / (2.0 * h);
            let fd_2 = (bump(0.0, h) - bump(0.0, -h)) / (2.0 * h);
            for (a, n) in [(gx, fd_x), (g1, fd_1), (g2, fd_2)] {
                assert!((a - n).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {n} at {x} {p:?}");
            }
            checked += 1;
        }
    }

    #[test]
    fn maxmin_examples() {
        assert_eq!(maxmin(1.0, 3.0), (3.0, 1.0));
        assert_eq!(maxmin(3.0, 1.0), (3.0, 1.0));
        assert_eq!(maxmin(-1.0, -2.0), (-1.0, -2.0));
    }

    #[test]
    fn scalar_examples() {
        assert_eq!(ScalarActivation::Abs.apply(-2.0), 2.0);
        assert_eq!(ScalarActivation::Relu.apply(-2.0), 0.0);
        assert_eq!(ScalarActivation::Identity.apply(-2.0), -2.0);
        assert_eq!(ScalarActivation::Abs.grad(0.0), 1.0);
        assert_eq!(ScalarActivation::Relu.grad(0.0), 1.0);
        assert_eq!(ScalarActivation::Relu.grad(-1.0), 0.0);
    }

    #[test]
    fn maxmin_decomposition_examples() {
        let (a, b) = maxmin_as_abs_identity(1.0, 3.0);
        assert!((a - 3.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
        let (a, b) = maxmin_as_abs_identity(0.7, 0.7);
        assert!((a - 0.7).abs() < 1e-15 && (b - 0.7).abs() < 1e-15);
    }

    #[test]
    fn maxmin_decomposition_agrees_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let (x, y) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let (m1, m2) = maxmin(x, y);
            let (d1, d2) = maxmin_as_abs_identity(x, y);
            assert!((m1 - d1).abs() <= 1e-12 && (m2 - d2).abs() <= 1e-12);
        }
    }

    #[test]
    fn stage_backward_accumulates_theta_gradients() {
        let stage = Activation::NAct(vec![N_PARAMS, NActParams::IDENTITY]);
        let mut acc = [[0.0; 2]; 2];
        let dx = stage.backward(&[2.0, 1.0], &[1.0, 1.0], Some(&mut acc));
        assert_eq!(dx, vec![1.0, 1.0]);
        assert_eq!(acc[0], [0.0, -2.0]);
        assert_eq!(stage.forward(&[0.0, 5.0]), vec![0.0, 5.0]);
    }

    #[test]
    fn maxmin_stage_routes_gradients() {
        let stage = Activation::MaxMin;
        assert_eq!(stage.forward(&[1.0, 3.0, 5.0]), vec![3.0, 1.0, 5.0]);
        assert_eq!(stage.backward(&[1.0, 3.0, 5.0], &[10.0, 20.0, 30.0], None), vec![
            20.0, 10.0, 30.0
        ]);
    }

    proptest! {
        #[test]
        fn activations_are_one_lipschitz(x in -50.0f64..50.0, y in -50.0f64..50.0,
                                         t1 in -5.0f64..5.0, t2 in -5.0f64..5.0) {
            let tol = (x - y).abs() + 1e-12;
            let p = NActParams::new(t1, t2);
            prop_assert!((n_act(x, &p) - n_act(y, &p)).abs() <= tol);
            prop_assert!((n_act(x, &NActParams::abs_at(t2)) - n_act(y, &NActParams::abs_at(t2))).abs() <= tol);
            for k in [ScalarActivation::Abs, ScalarActivation::Relu, ScalarActivation::Identity] {
                prop_assert!((k.apply(x) - k.apply(y)).abs() <= tol);
            }
        }

        #[test]
        fn maxmin_is_one_lipschitz_in_l2(a in -50.0f64..50.0, b in -50.0f64..50.0,
                                          c in -50.0f64..50.0, d in -50.0f64..50.0) {
            let (p, q) = (maxmin(a, b), maxmin(c, d));
            let out = libm::hypot(p.0 - q.0, p.1 - q.1);
            prop_assert!(out <= libm::hypot(a - c, b - d) + 1e-12);
        }
    }
}
