use alloc::format;
use alloc::vec::Vec;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::layers::LayerKind;
use crate::nn::{Layer, Network};
use crate::pwl::CpwlFunction;

/// Allowed excess of a compiled layer's spectral norm over 1.
pub const LAYER_NORM_TOL: f64 = 1e-9;
/// Distance beyond the outermost breakpoints covered by unbounded checks.
pub const UNBOUNDED_MARGIN: f64 = 10.0;
/// Magnitude of the far-out spot checks in unbounded verification.
pub const SPOT_CHECK_MAGNITUDE: f64 = 1e6;

/// Largest allowed number of linear layers for `k` non-linearities.
pub fn linear_layer_bound(k: usize) -> usize {
    k + 5
}

/// Largest allowed number of activation stages for `k` non-linearities.
pub fn activation_bound(k: usize) -> usize {
    (3 * k).div_ceil(2) + 5
}

/// Result of checking a compiled network against its source function.
#[derive(Debug, Clone, PartialEq)]
pub struct CompileReport {
    /// Non-linearity count of the source function.
    pub k: usize,
    pub linear_layer_count: usize,
    /// Activation stages with a non-trivial finite N-activation and no
    /// absolute-value channel.
    pub n_act_count: usize,
    /// Activation stages containing an absolute-value channel.
    pub abs_act_count: usize,
    pub max_abs_error: f64,
    /// Largest `|error| / |x|` over the far-out spot checks (0 when none).
    pub max_spot_rel_error: f64,
    pub probe_count: usize,
    /// Largest spectral norm over the linear layers (0 when there are none).
    pub max_layer_norm: f64,
}

impl CompileReport {
    pub fn activation_count(&self) -> usize {
        self.n_act_count + self.abs_act_count
    }

    pub fn within_size_bounds(&self) -> bool {
        self.linear_layer_count <= linear_layer_bound(self.k) && self.activation_count() <= activation_bound(self.k)
    }

    pub fn layers_nonexpansive(&self) -> bool {
        self.max_layer_norm <= 1.0 + LAYER_NORM_TOL
    }

    /// Error within `tol`, size bounds met and every layer non-expansive.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_abs_error <= tol
            && self.max_spot_rel_error <= tol
            && self.within_size_bounds()
            && self.layers_nonexpansive()
    }
}

fn layer_norm(layer: &Layer) -> Result<Option<f64>> {
    let Layer::Dense(d) = layer else { return Ok(None) };
    if d.kind() != LayerKind::Linear {
        return Err(Error::InvalidNetwork(format!("compiled networks use linear layers, found {}", d.kind().name())));
    }
    let w = d.effective_weight().expect("linear layers expose their weight");
    match w.small_spectral_norm() {
        Some(n) => Ok(Some(n)),
        None => Err(Error::InvalidNetwork(format!("layer of shape {}x{} is wider than 2", w.rows(), w.cols()))),
    }
}

fn structure(net: &Network, f: &CpwlFunction) -> Result<CompileReport> {
    if net.input_dim() != 1 || net.output_dim() != 1 {
        return Err(Error::ShapeMismatch { expected: 1, found: net.input_dim().max(net.output_dim()) });
    }
    let mut report = CompileReport {
        k: f.nonlinearity_count(),
        linear_layer_count: 0,
        n_act_count: 0,
        abs_act_count: 0,
        max_abs_error: 0.0,
        max_spot_rel_error: 0.0,
        probe_count: 0,
        max_layer_norm: 0.0,
    };
    for layer in net.layers() {
        if let Some(n) = layer_norm(layer)? {
            report.linear_layer_count += 1;
            report.max_layer_norm = report.max_layer_norm.max(n);
        }
    }
    for act in net.nontrivial_activations() {
        match act {
            Activation::NAct(p) if p.iter().any(|p| p.abs_mode) => report.abs_act_count += 1,
            Activation::Abs => report.abs_act_count += 1,
            _ => report.n_act_count += 1,
        }
    }
    Ok(report)
}

/// Compares `net` with `f` on the probe set of `[lo, hi]` and collects size
/// and norm statistics.
pub fn verify_compiled(net: &Network, f: &CpwlFunction, lo: f64, hi: f64) -> Result<CompileReport> {
    let mut report = structure(net, f)?;
    let eval = |x: f64| net.eval_scalar(x).unwrap_or(f64::NAN);
    report.max_abs_error = f.max_abs_diff(eval, lo, hi)?;
    report.probe_count = f.probe_points(lo, hi).len();
    Ok(report)
}

/// Checks `net` against `f` on `+-(max |t_i| + 10)` plus relative spot
/// checks at `+-1e6`, which cover both tails.
pub fn verify_unbounded(net: &Network, f: &CpwlFunction) -> Result<CompileReport> {
    let reach = f.breakpoints().iter().fold(0.0f64, |m, t| m.max(t.abs())) + UNBOUNDED_MARGIN;
    let mut report = verify_compiled(net, f, -reach, reach)?;
    let spots = [-SPOT_CHECK_MAGNITUDE, -0.5 * SPOT_CHECK_MAGNITUDE, 0.5 * SPOT_CHECK_MAGNITUDE, SPOT_CHECK_MAGNITUDE];
    for x in spots {
        let y = net.eval_scalar(x)?;
        if !y.is_finite() {
            return Err(Error::NonFinite(x));
        }
        report.max_spot_rel_error = report.max_spot_rel_error.max((y - f.eval(x)).abs() / x.abs());
    }
    report.probe_count += spots.len();
    Ok(report)
}

/// `|f(x0 + delta / 2) - f(x0 - delta / 2)| / delta` for a scalar network.
pub fn average_slope(net: &Network, x0: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Precondition("delta must be positive".into()));
    }
    let a = net.eval_scalar(x0 + 0.5 * delta)?;
    let b = net.eval_scalar(x0 - 0.5 * delta)?;
    Ok((a - b).abs() / delta)
}

/// Bound on the long-range average slope of a scalar network whose
/// activations fold (absolute value or MaxMin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessBound {
    /// Channel of the first activation stage used for the bound.
    pub channel: usize,
    /// Input weight of the folding channel.
    pub weight: f64,
    /// Input at which the folding channel has its kink.
    pub kink: f64,
    /// `sqrt(1 - weight^2)`.
    pub bound: f64,
}

/// For a 1-Lipschitz network `R -> R` whose first non-trivial activation
/// folds some channel with input weight `w`, the average slope over any
/// interval centered on that channel's kink is at most `sqrt(1 - w^2)`.
/// Returns the tightest such bound, or `None` when no folding channel
/// exists.
pub fn abs_witness_bound(net: &Network) -> Result<Option<WitnessBound>> {
    if net.input_dim() != 1 || net.output_dim() != 1 {
        return Err(Error::ShapeMismatch { expected: 1, found: net.input_dim().max(net.output_dim()) });
    }
    let Some(pos) = net.layers().iter().position(|l| match l {
        Layer::Act(Activation::NAct(p)) => p.iter().any(|p| !p.is_identity()),
        Layer::Act(Activation::Identity) => false,
        Layer::Act(_) => true,
        Layer::Dense(_) => false,
    }) else {
        return Ok(None);
    };
    let prefix = Network::new(1, net.layers()[..pos].to_vec())?;
    let mut prefix = prefix;
    prefix.set_input_offset(net.input_offset().map(<[f64]>::to_vec))?;
    let at0 = prefix.predict(&[0.0])?;
    let at1 = prefix.predict(&[1.0])?;
    let w: Vec<f64> = at1.iter().zip(&at0).map(|(a, b)| a - b).collect();
    let b = at0;
    // Each candidate folds the scalar `a x + c` at its kink.
    let mut candidates: Vec<(usize, f64, f64, f64)> = Vec::new();
    match &net.layers()[pos] {
        Layer::Act(Activation::Abs) => {
            candidates.extend((0..w.len()).map(|i| (i, w[i], b[i], 0.0)));
        }
        Layer::Act(Activation::NAct(p)) => {
            for (i, p) in p.iter().enumerate().filter(|(_, p)| p.abs_mode) {
                candidates.push((i, w[i], b[i], p.theta2));
            }
        }
        Layer::Act(Activation::MaxMin) => {
            let r = core::f64::consts::FRAC_1_SQRT_2;
            for i in (0..w.len() / 2).map(|j| 2 * j) {
                candidates.push((i, r * (w[i] - w[i + 1]), r * (b[i] - b[i + 1]), 0.0));
            }
        }
        _ => {}
    }
    let best = candidates
        .into_iter()
        .filter(|c| c.1 != 0.0)
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()));
    Ok(best.map(|(channel, a, c, theta)| {
        let weight = a.abs().min(1.0);
        WitnessBound { channel, weight: a, kink: (theta - c) / a, bound: libm::sqrt(1.0 - weight * weight) }
    }))
}
