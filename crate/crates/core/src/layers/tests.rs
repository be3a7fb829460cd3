use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::linalg::norm;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn svd_norm(m: &Matrix) -> f64 {
    let n = nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    n.singular_values().max()
}

#[test]
fn aol_diag_examples() {
    assert_eq!(aol_diag(&Matrix::identity(4)), vec![1.0; 4]);
    let ones = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert_eq!(aol_diag(&ones), vec![0.5, 0.5]);
    let w = ones.scale_columns(&aol_diag(&ones));
    assert!((svd_norm(&w) - 1.0).abs() < 1e-12);
    let partial = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
    assert_eq!(aol_diag(&partial), vec![1.0, 1.0]);
}

#[test]
fn aol_forward_examples() {
    let id = DenseParams::unbiased(LayerKind::Aol, Matrix::identity(3)).unwrap();
    assert_eq!(aol_forward(&id, &[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
    let ones = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let p = DenseParams::unbiased(LayerKind::Aol, ones).unwrap();
    assert_eq!(aol_forward(&p, &[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
    let bias_only = DenseParams::new(LayerKind::Aol, Matrix::zeros(2, 2), vec![1.0, 0.0]).unwrap();
    for x in [[0.0, 0.0], [5.0, -3.0]] {
        assert_eq!(aol_forward(&bias_only, &x).unwrap(), vec![1.0, 0.0]);
    }
    assert!(matches!(aol_forward(&bias_only, &[1.0]), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn cpl_forward_examples() {
    let id = DenseParams::unbiased(LayerKind::Cpl, Matrix::identity(2)).unwrap();
    let mut state = PowerIterState::default();
    assert_eq!(cpl_forward(&id, &[1.0, -1.0], &mut state).unwrap(), vec![-1.0, -1.0]);
    let zero = DenseParams::unbiased(LayerKind::Cpl, Matrix::zeros(2, 2)).unwrap();
    assert_eq!(cpl_forward(&zero, &[0.3, 0.7], &mut state).unwrap(), vec![0.3, 0.7]);
    let inactive = DenseParams::new(LayerKind::Cpl, Matrix::identity(2), vec![-100.0, -100.0]).unwrap();
    assert_eq!(cpl_forward(&inactive, &[0.3, 0.7], &mut state).unwrap(), vec![0.3, 0.7]);
}

#[test]
fn cpl_rectangular_hidden_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = DenseParams::unbiased(LayerKind::Cpl, random_matrix(&mut rng, 5, 3)).unwrap();
    assert_eq!((p.in_dim(), p.out_dim()), (3, 3));
    let y = cpl_forward(&p, &[0.1, 0.2, 0.3], &mut PowerIterState::default()).unwrap();
    assert_eq!(y.len(), 3);
}

#[test]
fn soc_forward_examples() {
    let zero = DenseParams::unbiased(LayerKind::Soc, Matrix::zeros(2, 2)).unwrap();
    for terms in [1, 5, 12] {
        assert_eq!(soc_forward(&zero, &[0.3, -0.4], terms).unwrap(), vec![0.3, -0.4]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = random_matrix(&mut rng, 3, 3);
    let a = skew_part(&p);
    let x = [1.0, 2.0, -1.0];
    let params = DenseParams::unbiased(LayerKind::Soc, p).unwrap();
    let expected: Vec<f64> = x.iter().zip(a.matvec(&x)).map(|(u, v)| u + v).collect();
    let got = soc_forward(&params, &x, 1).unwrap();
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-15);
    }
}

#[test]
fn soc_quarter_rotation() {
    let p = Matrix::from_rows(&[vec![0.0, FRAC_PI_2], vec![-FRAC_PI_2, 0.0]]).unwrap();
    let params = DenseParams::unbiased(LayerKind::Soc, p).unwrap();
    let y = soc_forward(&params, &[1.0, 0.0], 40).unwrap();
    assert!(y[0].abs() < 1e-9 && (y[1] + 1.0).abs() < 1e-9, "{y:?}");
}

#[test]
fn soc_uses_only_the_skew_part() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_matrix(&mut rng, 4, 4);
    let sym = Matrix::from_fn(4, 4, |r, c| p[(r, c)] + p[(c, r)]);
    let mut shifted = p.clone();
    shifted.add_assign(&sym);
    let x = random_vec(&mut rng, 4);
    let a = soc_forward(&DenseParams::unbiased(LayerKind::Soc, p).unwrap(), &x, 12).unwrap();
    let b = soc_forward(&DenseParams::unbiased(LayerKind::Soc, shifted).unwrap(), &x, 12).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn soc_requires_square_weight() {
    let err = DenseParams::unbiased(LayerKind::Soc, Matrix::zeros(2, 3)).unwrap_err();
    assert!(matches!(err, Error::ShapeMismatch { .. }));
}

#[test]
fn spectral_norm_matches_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let rows = rng.random_range(1..12);
        let cols = rng.random_range(1..12);
        let p = random_matrix(&mut rng, rows, cols);
        let mut state = PowerIterState::new(5000, 1e-14);
        let s = spectral_norm(&p, &mut state);
        let truth = svd_norm(&p);
        assert!(s <= truth * (1.0 + 1e-12));
        assert!((s - truth).abs() < 1e-6 * truth, "{s} vs {truth}");
    }
}

#[test]
fn aol_vjp_examples() {
    let params = DenseParams::unbiased(LayerKind::Aol, Matrix::identity(3)).unwrap();
    let g = [1.0, 0.0, 0.0];
    let vjp = layer_vjp(&params, &[0.5, 0.1, -0.2], &g, Mode::Train).unwrap();
    assert!(norm(&vjp.input) <= 1.0 + 1e-15);
    assert_eq!(vjp.bias, g.to_vec());
}

/// Loss `g . f(x)` for a layer whose CPL norm estimate is pinned to `sigma`.
fn pinned_loss(base: &DenseLayer, weight: &Matrix, bias: &[f64], x: &[f64], g: &[f64]) -> f64 {
    let mut layer = base.clone();
    layer.params_mut().weight = weight.clone();
    layer.params_mut().bias = bias.to_vec();
    layer.refresh();
    dot(&layer.forward(x, Mode::Train), g)
}

fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3);
    let rel = (analytic - numeric).abs() / denom;
    assert!(rel <= 1e-5, "{what}: analytic {analytic} numeric {numeric} rel {rel}");
}

fn check_vjp(kind: LayerKind, rows: usize, cols: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = DenseParams::new(kind, random_matrix(&mut rng, rows, cols), random_vec(&mut rng, rows)).unwrap();
    let layer = DenseLayer::new(params.clone()).unwrap();
    let x = random_vec(&mut rng, layer.in_dim());
    let g = random_vec(&mut rng, layer.out_dim());
    let vjp = layer.vjp(&x, &g, Mode::Train).unwrap();
    let h = 1e-6;
    let mut sig = Vec::new();
    layer.branch_signature(&x, &mut sig);
    let same_branch = |w: &Matrix, b: &[f64], x: &[f64]| {
        let mut l = layer.clone();
        l.params_mut().weight = w.clone();
        l.params_mut().bias = b.to_vec();
        l.refresh();
        let mut s = Vec::new();
        l.branch_signature(x, &mut s);
        s == sig
    };
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        if !same_branch(&params.weight, &params.bias, &xp) || !same_branch(&params.weight, &params.bias, &xm) {
            continue;
        }
        let fp = pinned_loss(&layer, &params.weight, &params.bias, &xp, &g);
        let fm = pinned_loss(&layer, &params.weight, &params.bias, &xm, &g);
        assert_close(vjp.input[i], (fp - fm) / (2.0 * h), "dx");
    }
    for r in 0..rows {
        for c in 0..cols {
            let mut wp = params.weight.clone();
            let mut wm = params.weight.clone();
            wp.as_mut_slice()[r * cols + c] += h;
            wm.as_mut_slice()[r * cols + c] -= h;
            if !same_branch(&wp, &params.bias, &x) || !same_branch(&wm, &params.bias, &x) {
                continue;
            }
            let fp = pinned_loss(&layer, &wp, &params.bias, &x, &g);
            let fm = pinned_loss(&layer, &wm, &params.bias, &x, &g);
            assert_close(vjp.weight[(r, c)], (fp - fm) / (2.0 * h), "dP");
        }
    }
    for i in 0..rows {
        let mut bp = params.bias.clone();
        let mut bm = params.bias.clone();
        bp[i] += h;
        bm[i] -= h;
        if !same_branch(&params.weight, &bp, &x) || !same_branch(&params.weight, &bm, &x) {
            continue;
        }
        let fp = pinned_loss(&layer, &params.weight, &bp, &x, &g);
        let fm = pinned_loss(&layer, &params.weight, &bm, &x, &g);
        assert_close(vjp.bias[i], (fp - fm) / (2.0 * h), "db");
    }
}

#[test]
fn vjp_matches_finite_differences() {
    for seed in 0..20 {
        check_vjp(LayerKind::Aol, 4, 4, seed);
        check_vjp(LayerKind::Cpl, 4, 4, seed);
        check_vjp(LayerKind::Soc, 4, 4, seed);
        check_vjp(LayerKind::Linear, 4, 4, seed);
    }
}

#[test]
fn vjp_matches_finite_differences_rectangular() {
    for seed in 0..10 {
        check_vjp(LayerKind::Aol, 3, 5, seed);
        check_vjp(LayerKind::Aol, 6, 2, seed);
        check_vjp(LayerKind::Cpl, 6, 3, seed);
        check_vjp(LayerKind::Linear, 2, 7, seed);
    }
}

#[test]
fn audit_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let p = DenseParams::unbiased(LayerKind::Aol, random_matrix(&mut rng, 6, 6)).unwrap();
        let report = lipschitz_audit(&p, 50, &mut rng).unwrap();
        assert!(report.empirical <= 1.0 + 1e-9);
        assert!(report.spectral.unwrap() <= 1.0 + 1e-9);
        let c = DenseParams::new(LayerKind::Cpl, random_matrix(&mut rng, 6, 6), random_vec(&mut rng, 6)).unwrap();
        assert!(lipschitz_audit(&c, 50, &mut rng).unwrap().empirical <= 1.0 + 1e-6);
    }
    let w = Matrix::diag(&[2.0, 0.5]);
    let lin = DenseParams::unbiased(LayerKind::Linear, w).unwrap();
    let report = lipschitz_audit(&lin, 2000, &mut rng).unwrap();
    assert!(report.empirical <= 2.0 + 1e-12 && report.empirical > 1.95, "{report:?}");
    assert!((report.spectral.unwrap() - 2.0).abs() < 1e-9);
    assert!(lipschitz_audit(&lin, 0, &mut rng).is_err());
}

#[test]
fn derived_state_tracks_parameter_edits() {
    let mut layer = DenseLayer::new(DenseParams::unbiased(LayerKind::Aol, Matrix::identity(2)).unwrap()).unwrap();
    layer.params_mut().weight = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    layer.refresh();
    assert_eq!(layer.aol_diag().unwrap(), &[0.5, 0.5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aol_effective_weight_is_contractive(rows in 1usize..24, cols in 1usize..24, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_matrix(&mut rng, rows, cols);
        let w = p.scale_columns(&aol_diag(&p));
        prop_assert!(svd_norm(&w) <= 1.0 + 1e-9);
    }

    #[test]
    fn soc_long_series_preserves_norm(n in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = DenseParams::unbiased(LayerKind::Soc, random_matrix(&mut rng, n, n)).unwrap();
        let x = random_vec(&mut rng, n);
        let y = soc_forward(&params, &x, 40).unwrap();
        prop_assert!((norm(&y) - norm(&x)).abs() < 1e-9);
    }

    #[test]
    fn cpl_is_nonexpansive(n in 1usize..8, h in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = DenseParams::new(LayerKind::Cpl, random_matrix(&mut rng, h, n), random_vec(&mut rng, h)).unwrap();
        let report = lipschitz_audit(&params, 40, &mut rng).unwrap();
        prop_assert!(report.empirical <= 1.0 + 1e-6);
    }
}
