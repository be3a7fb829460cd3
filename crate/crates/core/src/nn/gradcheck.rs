use alloc::vec::Vec;

use super::network::{Gradients, Layer, LayerGrad, Network};
use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::linalg::dot;

/// Which quantity a gradient entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Input(usize),
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, index: usize },
    Theta { layer: usize, channel: usize, which: usize },
}

/// Result of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`.
    pub max_rel_error: f64,
    pub worst: Option<ParamRef>,
    pub checked: usize,
    /// Entries whose perturbation crossed a kink.
    pub skipped: usize,
}

/// Floor of the relative-error denominator.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

fn loss_weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } / (1.0 + i as f64)).collect()
}

/// Checks every parameter (and every input coordinate) of `net` at `x`
/// against central differences of the scalar `sum_i c_i f_i(x)` with fixed
/// weights `c_i`. Perturbations that change the branch pattern of any
/// non-smooth stage are skipped and counted. CPL norm estimates are held
/// fixed.
pub fn grad_check(net: &Network, x: &[f64], h: f64) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::Precondition("step must be positive".into()));
    }
    let c = loss_weights(net.output_dim());
    let (_, tape) = net.forward(x, Mode::Train)?;
    let (grads, dx) = net.backward(&tape, &c)?;
    let base_sig = net.branch_signature(x)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0, skipped: 0 };

    let loss_at = |n: &Network, x: &[f64]| -> Result<(f64, Vec<u8>)> {
        let out = n.apply(x, Mode::Train)?;
        Ok((dot(&out, &c), n.branch_signature(x)?))
    };
    let record = |report: &mut GradCheckReport, what: ParamRef, analytic: f64, plus: (f64, Vec<u8>), minus: (f64, Vec<u8>)| {
        if plus.1 != base_sig || minus.1 != base_sig {
            report.skipped += 1;
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error || rel.is_nan() {
            report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
            report.worst = Some(what);
        }
    };

    for i in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let plus = loss_at(net, &xp)?;
        let minus = loss_at(net, &xm)?;
        record(&mut report, ParamRef::Input(i), dx[i], plus, minus);
    }

    let mut work = net.clone();
    let scale = net.nact_scale();
    for (l, grad) in grads.layers.iter().enumerate() {
        match grad {
            LayerGrad::Dense { weight, bias } => {
                let cols = weight.cols();
                for k in 0..weight.as_slice().len() {
                    let what = ParamRef::Weight { layer: l, row: k / cols, col: k % cols };
                    let (plus, minus) = perturb(&mut work, x, h, &loss_at, |n, d| {
                        n.dense_mut(l).expect("dense").params_mut().weight.as_mut_slice()[k] += d;
                    })?;
                    record(&mut report, what, weight.as_slice()[k], plus, minus);
                }
                for (k, &g) in bias.iter().enumerate() {
                    let (plus, minus) = perturb(&mut work, x, h, &loss_at, |n, d| {
                        n.dense_mut(l).expect("dense").params_mut().bias[k] += d;
                    })?;
                    record(&mut report, ParamRef::Bias { layer: l, index: k }, g, plus, minus);
                }
            }
            LayerGrad::NAct(g) => {
                for (ch, pair) in g.iter().enumerate() {
                    for which in 0..2 {
                        let abs_lane = matches!(&net.layers()[l], Layer::Act(Activation::NAct(p)) if p[ch].abs_mode);
                        if which == 0 && abs_lane {
                            continue;
                        }
                        let (plus, minus) = perturb(&mut work, x, h, &loss_at, |n, d| {
                            let p = &mut n.nact_params_mut(l).expect("nact")[ch];
                            if which == 0 {
                                p.theta1 += scale * d;
                            } else {
                                p.theta2 += scale * d;
                            }
                        })?;
                        record(&mut report, ParamRef::Theta { layer: l, channel: ch, which }, pair[which], plus, minus);
                    }
                }
            }
            LayerGrad::None => {}
        }
    }
    Ok(report)
}

type Probe = (f64, Vec<u8>);

fn perturb(
    work: &mut Network,
    x: &[f64],
    h: f64,
    loss_at: &impl Fn(&Network, &[f64]) -> Result<Probe>,
    mut edit: impl FnMut(&mut Network, f64),
) -> Result<(Probe, Probe)> {
    let saved = work.layers().to_vec();
    edit(work, h);
    work.refresh_derived()?;
    let plus = loss_at(work, x)?;
    restore(work, &saved);
    edit(work, -h);
    work.refresh_derived()?;
    let minus = loss_at(work, x)?;
    restore(work, &saved);
    work.refresh_derived()?;
    Ok((plus, minus))
}

fn restore(work: &mut Network, saved: &[Layer]) {
    work.layers_mut().clone_from_slice(saved);
}

/// Convenience: the gradients `grad_check` compares against.
pub fn reference_gradients(net: &Network, x: &[f64]) -> Result<Gradients> {
    let c = loss_weights(net.output_dim());
    let (_, tape) = net.forward(x, Mode::Train)?;
    Ok(net.backward(&tape, &c)?.0)
}
