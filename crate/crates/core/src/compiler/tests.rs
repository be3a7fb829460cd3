use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::activations::Activation;
use crate::layers::{DenseLayer, DenseParams, LayerKind};
use crate::linalg::Matrix;
use crate::nn::Layer;

fn cpwl(t: &[f64], s: &[f64], anchor: (f64, f64)) -> CpwlFunction {
    CpwlFunction::new(t.to_vec(), s.to_vec(), anchor).unwrap()
}

fn activation_stages(net: &Network) -> usize {
    net.nontrivial_activations().count()
}

/// Random function with unit tails and slopes whose signs follow `signs`.
fn with_sign_pattern(signs: &[f64], rng: &mut ChaCha8Rng) -> CpwlFunction {
    let k = signs.len() + 1;
    let mut t: Vec<f64> = (0..k).map(|i| i as f64 + rng.random_range(-0.3..0.3)).collect();
    t.sort_by(f64::total_cmp);
    let mut s = vec![1.0];
    s.extend(signs.iter().map(|sg| sg * rng.random_range(0.05..0.95)));
    s.push(1.0);
    cpwl(&t, &s, (0.0, rng.random_range(-1.0..1.0)))
}

#[test]
fn slope_coeffs_examples() {
    let c = slope_coeffs(1.0).unwrap();
    assert_eq!((c.alpha, c.beta), (1.0, 0.0));
    let c = slope_coeffs(0.0).unwrap();
    assert!((c.alpha - FRAC_1_SQRT_2).abs() < 1e-15 && (c.beta - FRAC_1_SQRT_2).abs() < 1e-15);
    let c = slope_coeffs(-1.0).unwrap();
    assert_eq!((c.alpha, c.beta), (0.0, 1.0));
    assert!(matches!(slope_coeffs(1.5), Err(Error::SlopeOutOfRange(_))));
    assert!(slope_coeffs(f64::NAN).is_err());
}

#[test]
fn increasing_example() {
    let f = cpwl(&[0.0, 1.0], &[1.0, 0.0, 1.0], (0.0, 0.0));
    let net = compile_increasing(&f).unwrap();
    assert!(net.eval_scalar(0.5).unwrap().abs() < 1e-12);
    assert!((net.eval_scalar(2.0).unwrap() - 1.0).abs() < 1e-12);
    assert!(net.linear_layer_count() <= 2);
    assert!(activation_stages(&net) <= 1);
}

#[test]
fn identity_compiles_to_empty_network() {
    let f = CpwlFunction::linear(1.0, 0.0).unwrap();
    let net = compile_increasing(&f).unwrap();
    assert!(net.layers().is_empty());
    assert_eq!(net.eval_scalar(3.25).unwrap(), 3.25);
    let shifted = compile_increasing(&CpwlFunction::linear(1.0, 2.0).unwrap()).unwrap();
    assert_eq!(shifted.linear_layer_count(), 1);
    assert_eq!(activation_stages(&shifted), 0);
    assert_eq!(shifted.eval_scalar(1.0).unwrap(), 3.0);
}

#[test]
fn random_increasing_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let f = with_sign_pattern(&[1.0; 9], &mut rng);
        assert_eq!(f.nonlinearity_count(), 10);
        let net = compile_increasing(&f).unwrap();
        let report = verify_compiled(&net, &f, -5.0, 15.0).unwrap();
        assert!(report.max_abs_error <= 1e-9, "{report:?}");
        assert!(report.linear_layer_count <= 10);
        assert!(report.activation_count() <= 9);
        assert!(report.layers_nonexpansive());
    }
}

#[test]
fn increasing_rejects_bad_input() {
    let decreasing = cpwl(&[0.0, 1.0], &[1.0, -0.5, 1.0], (0.0, 0.0));
    assert!(matches!(compile_increasing(&decreasing), Err(Error::Precondition(_))));
    let tails = cpwl(&[0.0], &[0.5, 1.0], (0.0, 0.0));
    assert!(matches!(compile_increasing(&tails), Err(Error::Precondition(_))));
    assert!(matches!(compile_grad1_tails(&tails), Err(Error::Precondition(_))));
}

#[test]
fn one_extreme_pair_costs_one_activation() {
    let f = cpwl(&[-1.0, 0.0, 1.0, 2.0], &[1.0, 0.5, -0.3, 0.2, 1.0], (0.0, 0.0));
    let reflected = cpwl(&[-1.0, 0.0, 1.0, 2.0], &[1.0, 0.5, 0.3, 0.2, 1.0], (0.0, 0.0));
    assert_eq!(f.extremes().len(), 2);
    let net = compile_grad1_tails(&f).unwrap();
    let base = compile_increasing(&reflected).unwrap();
    assert_eq!(activation_stages(&net), activation_stages(&base) + 1);
    assert!(verify_compiled(&net, &f, -5.0, 5.0).unwrap().max_abs_error <= 1e-12);
}

#[test]
fn monotone_grad1_matches_increasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = with_sign_pattern(&[1.0; 5], &mut rng);
    let a = compile_grad1_tails(&f).unwrap();
    let b = compile_increasing(&f).unwrap();
    assert_eq!(a.layers(), b.layers());
}

#[test]
fn four_extremes_are_exact_with_k_plus_one_activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let f = with_sign_pattern(&[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0], &mut rng);
        assert_eq!(f.extremes().len(), 4);
        let k = f.nonlinearity_count();
        let net = compile_grad1_tails(&f).unwrap();
        let report = verify_compiled(&net, &f, -5.0, 15.0).unwrap();
        assert!(report.max_abs_error <= 1e-9, "{report:?}");
        assert_eq!(report.activation_count(), k + 1);
        assert!(report.linear_layer_count <= k);
    }
}

#[test]
fn bounded_n_function_is_a_single_activation() {
    let f = CpwlFunction::n_function();
    let net = compile_bounded(&f, -3.0, 3.0).unwrap();
    let acts: Vec<&Activation> = net.nontrivial_activations().collect();
    assert_eq!(acts.len(), 1);
    let Activation::NAct(p) = acts[0] else { panic!("expected an N-activation") };
    let p: Vec<_> = p.iter().filter(|p| !p.is_identity()).collect();
    assert_eq!(p.len(), 1);
    assert!(!p[0].abs_mode);
    assert_eq!((p[0].theta_min(), p[0].theta_max()), (-0.5, 0.5));
    assert_eq!(net.linear_layer_count(), 0);
    assert!(verify_compiled(&net, &f, -3.0, 3.0).unwrap().max_abs_error <= 1e-12);
}

#[test]
fn bounded_linear_has_unit_tails_outside() {
    let f = CpwlFunction::linear(0.5, 0.0).unwrap();
    let net = compile_bounded(&f, 0.0, 1.0).unwrap();
    assert!(verify_compiled(&net, &f, 0.0, 1.0).unwrap().max_abs_error <= 1e-12);
    let right = net.eval_scalar(3.0).unwrap() - net.eval_scalar(2.0).unwrap();
    let left = net.eval_scalar(-1.0).unwrap() - net.eval_scalar(-2.0).unwrap();
    assert!((right - 1.0).abs() < 1e-12 && (left - 1.0).abs() < 1e-12);
}

#[test]
fn bounded_random_within_size_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let f = CpwlFunction::random(20, -4.0, 4.0, &mut rng);
        let k = f.nonlinearity_count();
        let net = compile_bounded(&f, -5.0, 5.0).unwrap();
        let report = verify_compiled(&net, &f, -5.0, 5.0).unwrap();
        assert!(report.max_abs_error <= 1e-9, "{report:?}");
        assert!(report.linear_layer_count <= k + 2);
        assert!(2 * report.activation_count() <= 3 * k + 4);
    }
}

#[test]
fn bounded_rejects_outside_breakpoints() {
    let f = CpwlFunction::n_function();
    assert!(matches!(compile_bounded(&f, -0.5, 3.0), Err(Error::Precondition(_))));
    assert!(matches!(compile_bounded(&f, 3.0, -3.0), Err(Error::Precondition(_))));
}

#[test]
fn n_function_is_exact_everywhere() {
    let f = CpwlFunction::n_function();
    let net = compile(&f).unwrap();
    let report = verify_unbounded(&net, &f).unwrap();
    assert!(report.max_abs_error <= 1e-12, "{report:?}");
    for x in [-1e6, -12345.5, 1e6] {
        assert!((net.eval_scalar(x).unwrap() - f.eval(x)).abs() <= 1e-12);
    }
    assert!(report.passes(1e-12));
}

#[test]
fn mixed_tails_example() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let mut t: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
        t.sort_by(f64::total_cmp);
        let mut s = vec![0.3];
        s.extend((0..6).map(|_| rng.random_range(-1.0..1.0)));
        s.push(-0.7);
        let f = cpwl(&t, &s, (0.0, 0.0));
        assert_eq!(f.nonlinearity_count(), 7);
        let net = compile(&f).unwrap();
        let report = verify_unbounded(&net, &f).unwrap();
        assert!(report.max_abs_error <= 1e-9 && report.max_spot_rel_error <= 1e-9, "{report:?}");
        assert!(report.linear_layer_count <= 12);
        assert!(report.activation_count() <= 15, "{report:?}");
    }
}

#[test]
fn negative_identity_is_one_flip() {
    let f = CpwlFunction::linear(-1.0, 0.0).unwrap();
    let net = compile(&f).unwrap();
    assert_eq!(net.layers().len(), 1);
    let Layer::Dense(d) = &net.layers()[0] else { panic!("expected a linear layer") };
    assert_eq!(d.params().weight.as_slice(), &[-1.0]);
    assert_eq!(d.params().bias, vec![0.0]);
    assert_eq!(net.eval_scalar(2.5).unwrap(), -2.5);
}

#[test]
fn constant_and_sloped_lines() {
    for (s, b) in [(0.0, 1.5), (0.25, -2.0), (-0.6, 0.1)] {
        let f = CpwlFunction::linear(s, b).unwrap();
        let net = compile(&f).unwrap();
        assert!(verify_unbounded(&net, &f).unwrap().passes(1e-12));
    }
}

#[test]
fn corrupted_bias_shows_up_as_error() {
    let f = cpwl(&[-1.0, 0.5, 2.0], &[0.2, -0.8, 0.6, -0.1], (0.0, 0.3));
    let mut net = compile(&f).unwrap();
    assert!(verify_unbounded(&net, &f).unwrap().max_abs_error <= 1e-9);
    let last = net.layers().len() - 1;
    let offset = 0.125;
    let Layer::Dense(d) = &net.layers()[last] else { panic!("expected a final linear layer") };
    let mut params = d.params().clone();
    params.bias[0] += offset;
    net.layers_mut()[last] = Layer::Dense(DenseLayer::new(params).unwrap());
    net.refresh().unwrap();
    let report = verify_unbounded(&net, &f).unwrap();
    assert!((report.max_abs_error - offset).abs() <= 1e-9, "{report:?}");
    assert!(!report.passes(1e-9));
}

#[test]
fn verifier_rejects_constrained_layers() {
    let layer = DenseLayer::new(DenseParams::new(LayerKind::Aol, Matrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![0.0]).unwrap())
        .unwrap();
    let net = Network::new(1, vec![Layer::Dense(layer)]).unwrap();
    assert!(matches!(verify_compiled(&net, &CpwlFunction::linear(1.0, 0.0).unwrap(), 0.0, 1.0), Err(Error::InvalidNetwork(_))));
}

#[test]
fn bounds_formulas() {
    assert_eq!(linear_layer_bound(7), 12);
    assert_eq!(activation_bound(7), 16);
    assert_eq!(activation_bound(0), 5);
    assert_eq!(activation_bound(20), 35);
}

#[test]
fn corpus_of_random_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let k = rng.random_range(0..=20);
        let f = CpwlFunction::random(k, -5.0, 5.0, &mut rng);
        let net = compile(&f).unwrap();
        let report = verify_unbounded(&net, &f).unwrap();
        assert!(report.passes(1e-9), "{f:?}\n{report:?}");
    }
}

fn abs_layer(weights: &[f64], bias: &[f64]) -> Layer {
    let w = Matrix::from_vec(weights.len(), 1, weights.to_vec()).unwrap();
    Layer::Dense(DenseLayer::new(DenseParams::new(LayerKind::Linear, w, bias.to_vec()).unwrap()).unwrap())
}

fn readout(weights: &[f64]) -> Layer {
    let w = Matrix::from_vec(1, weights.len(), weights.to_vec()).unwrap();
    Layer::Dense(DenseLayer::new(DenseParams::new(LayerKind::Linear, w, vec![0.0]).unwrap()).unwrap())
}

#[test]
fn abs_witness_limits_average_slope() {
    let net = Network::new(
        1,
        vec![abs_layer(&[0.6, 0.8], &[0.3, -0.2]), Layer::Act(Activation::Abs), readout(&[0.6, 0.8])],
    )
    .unwrap();
    let w = abs_witness_bound(&net).unwrap().unwrap();
    assert_eq!(w.channel, 1);
    assert!((w.weight - 0.8).abs() < 1e-12);
    assert!((w.kink - 0.25).abs() < 1e-12);
    assert!((w.bound - 0.6).abs() < 1e-12);
    for delta in [1.0, 10.0, 1e3, 1e5] {
        assert!(average_slope(&net, w.kink, delta).unwrap() <= w.bound + 1e-12);
    }
}

#[test]
fn maxmin_witness_limits_average_slope() {
    let net = Network::new(
        1,
        vec![abs_layer(&[0.9, 0.1], &[0.0, 0.4]), Layer::Act(Activation::MaxMin), readout(&[0.7, 0.7])],
    )
    .unwrap();
    let w = abs_witness_bound(&net).unwrap().unwrap();
    let c = 0.8 * FRAC_1_SQRT_2;
    assert!((w.weight.abs() - c).abs() < 1e-12);
    assert!((w.bound - libm::sqrt(1.0 - c * c)).abs() < 1e-12);
    for delta in [1.0, 1e2, 1e4] {
        assert!(average_slope(&net, w.kink, delta).unwrap() <= w.bound + 1e-12);
    }
}

#[test]
fn n_activation_escapes_witness_bound() {
    let net = compile(&CpwlFunction::n_function()).unwrap();
    assert!(abs_witness_bound(&net).unwrap().is_none());
    assert!((average_slope(&net, 0.0, 1e4).unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn average_slope_rejects_bad_delta() {
    let net = Network::empty(1);
    assert!(average_slope(&net, 0.0, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slope_coeffs_invariants(s in -1.0f64..=1.0) {
        let c = slope_coeffs(s).unwrap();
        prop_assert!(c.alpha >= 0.0 && c.beta >= 0.0);
        prop_assert!((c.alpha * c.alpha + c.beta * c.beta - 1.0).abs() <= 1e-12);
        prop_assert!((c.alpha * c.alpha - c.beta * c.beta - s).abs() <= 1e-12);
    }

    #[test]
    fn compiled_networks_are_exact_and_small(seed in any::<u64>(), k in 0usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = CpwlFunction::random(k, -5.0, 5.0, &mut rng);
        let net = compile(&f).unwrap();
        let report = verify_unbounded(&net, &f).unwrap();
        prop_assert!(report.max_abs_error <= 1e-9, "{:?}", report);
        prop_assert!(report.within_size_bounds(), "{:?}", report);
        prop_assert!(report.layers_nonexpansive(), "{:?}", report);
    }

    #[test]
    fn compiled_networks_are_one_lipschitz(seed in any::<u64>(), k in 0usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = CpwlFunction::random(k, -5.0, 5.0, &mut rng);
        let net = compile(&f).unwrap();
        prop_assert!(net.lipschitz_audit(200, 8.0, &mut rng).unwrap() <= 1.0 + 1e-9);
    }

    #[test]
    fn compiled_networks_realize_segment_slopes(seed in any::<u64>(), k in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = CpwlFunction::random(k, -5.0, 5.0, &mut rng);
        let net = compile(&f).unwrap();
        let t = f.breakpoints();
        let mut mids: Vec<(f64, f64)> = t.windows(2).map(|w| (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]))).collect();
        mids.push((t[0] - 1.0, 1.0));
        mids.push((t[k - 1] + 1.0, 1.0));
        for (x, half) in mids {
            let h = 0.5 * half;
            let d = (net.eval_scalar(x + h).unwrap() - net.eval_scalar(x - h).unwrap()) / (2.0 * h);
            prop_assert!((d - f.slopes()[f.segment_of(x)]).abs() <= 1e-8, "x = {}", x);
        }
    }
}
