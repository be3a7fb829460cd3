//! Exact compilation of 1-CPWL scalar functions into width-2 networks.
//!
//! Every linear layer of a compiled network has spectral norm at most 1 and
//! every activation is an N-activation (absolute values use the exact
//! `abs_mode`), so compiled networks are 1-Lipschitz by construction.
//!
//! The construction proceeds in four steps:
//!
//! 1. [`compile_increasing`]: non-decreasing functions with slope 1 on both
//!    tails. Each interior segment of slope `s` is realized by one width-2
//!    stage built from `alpha = sqrt((1 + s) / 2)` and
//!    `beta = sqrt((1 - s) / 2)`.
//! 2. [`compile_grad1_tails`]: slope-1 tails with local extremes. The middle
//!    part between the highest maximum and the lowest minimum to its right is
//!    reflected, which removes two extremes; the reflected function is
//!    compiled recursively and one N-activation undoes the reflection.
//! 3. [`compile_bounded`]: arbitrary functions on an interval, extended with
//!    slope-1 tails.
//! 4. [`compile`]: arbitrary functions on the whole real line. Tail slopes
//!    are adjusted by two absolute-value stages; mixed-sign tails are reduced
//!    to equal-sign tails by folding at the global extremum.
//!
//! For a function with `k` non-linearities the result has at most `k + 5`
//! linear layers and at most `ceil(3k / 2) + 5` activation stages.

mod program;
mod verify;

use alloc::format;
use alloc::vec::Vec;

use crate::activations::NActParams;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::pwl::{CpwlFunction, ExtremumKind, SLOPE_MERGE_TOL};
use program::{Program, Stage};

pub use verify::{
    abs_witness_bound, activation_bound, average_slope, linear_layer_bound, verify_compiled, verify_unbounded,
    CompileReport, WitnessBound, LAYER_NORM_TOL, SPOT_CHECK_MAGNITUDE, UNBOUNDED_MARGIN,
};

/// Mixing coefficients of one segment: `alpha^2 + beta^2 = 1` and
/// `alpha^2 - beta^2 = s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeCoeffs {
    pub alpha: f64,
    pub beta: f64,
}

/// Coefficients for slope `s`.
pub fn slope_coeffs(s: f64) -> Result<SlopeCoeffs> {
    if !(s.abs() <= 1.0) {
        return Err(Error::SlopeOutOfRange(s));
    }
    Ok(SlopeCoeffs { alpha: libm::sqrt((1.0 + s) / 2.0), beta: libm::sqrt((1.0 - s) / 2.0) })
}

fn is_one(s: f64) -> bool {
    (s - 1.0).abs() <= SLOPE_MERGE_TOL
}

/// Reference point used to fix the additive constant.
fn reference_point(f: &CpwlFunction) -> f64 {
    let t = f.breakpoints();
    if t.is_empty() {
        f.anchor().0
    } else {
        t[t.len() / 2]
    }
}

/// Appends the constant that makes `prog` agree with `f`, then simplifies.
fn aligned(mut prog: Program, f: &CpwlFunction) -> Program {
    let x = reference_point(f);
    let shift = f.eval(x) - prog.eval(x);
    prog.push(Stage::Affine { scale: 1.0, shift });
    prog.normalize();
    prog
}

fn check_grad1_tails(f: &CpwlFunction) -> Result<()> {
    let (s0, sk) = (f.left_tail_slope(), f.right_tail_slope());
    if f.nonlinearity_count() > 0 && !(is_one(s0) && is_one(sk)) {
        return Err(Error::Precondition(format!("tail slopes must be 1, got {s0} and {sk}")));
    }
    Ok(())
}

/// Program equal to `f` up to an additive constant, for non-decreasing `f`
/// with slope-1 tails.
fn increasing_program(f: &CpwlFunction) -> Result<Program> {
    check_grad1_tails(f)?;
    if let Some(&s) = f.slopes().iter().find(|&&s| s < 0.0) {
        return Err(Error::Precondition(format!("function is not non-decreasing (slope {s})")));
    }
    let t = f.breakpoints();
    let mut prog = Program::default();
    for seg in 1..t.len() {
        let SlopeCoeffs { alpha, beta } = slope_coeffs(f.slopes()[seg])?;
        if beta == 0.0 {
            continue;
        }
        // Current program: slopes of f up to t[seg - 1], slope 1 after it.
        let lo = beta * prog.eval(t[seg - 1]);
        let hi_value = prog.eval(t[seg]);
        prog.push(Stage::Pair {
            expand: [alpha, beta],
            expand_bias: [0.0, 0.0],
            lanes: [NActParams::IDENTITY, NActParams::new(lo, beta * hi_value)],
            contract: [alpha, beta],
            contract_bias: 2.0 * beta * beta * hi_value,
        });
    }
    Ok(prog)
}

/// Program equal to `f` up to an additive constant, for `f` with slope-1
/// tails.
fn grad1_program(f: &CpwlFunction) -> Result<Program> {
    check_grad1_tails(f)?;
    let extremes = f.extremes();
    if extremes.is_empty() {
        return increasing_program(f);
    }
    let value = |i: usize| f.knot_value(i);
    let mut top: Option<usize> = None;
    for e in extremes.iter().filter(|e| e.kind == ExtremumKind::Max) {
        if top.is_none_or(|j| value(e.index) > value(j)) {
            top = Some(e.index);
        }
    }
    let is = top.ok_or_else(|| Error::Internal("extremes without a maximum".into()))?;
    let mut bottom: Option<usize> = None;
    for e in extremes.iter().filter(|e| e.kind == ExtremumKind::Min && e.index > is) {
        if bottom.is_none_or(|j| value(e.index) < value(j)) {
            bottom = Some(e.index);
        }
    }
    let it = bottom.ok_or_else(|| Error::Internal("no minimum right of the highest maximum".into()))?;

    let slopes: Vec<f64> =
        f.slopes().iter().enumerate().map(|(j, &s)| if j > is && j <= it { -s } else { s }).collect();
    let t = f.breakpoints();
    let g = CpwlFunction::new(t.to_vec(), slopes, (t[is], value(is)))?;
    if g.extremes().len() + 2 != extremes.len() {
        return Err(Error::Internal(format!(
            "reflection left {} of {} extremes",
            g.extremes().len(),
            extremes.len()
        )));
    }
    let mut prog = grad1_program(&g)?;
    let theta = NActParams::new(prog.eval(t[is]), prog.eval(t[it]));
    prog.push(Stage::Scalar(theta));
    Ok(prog)
}

/// Compiles a non-decreasing function with slope 1 on both tails into `k`
/// linear layers and at most `k - 1` activation stages.
pub fn compile_increasing(f: &CpwlFunction) -> Result<Network> {
    aligned(increasing_program(f)?, f).to_network()
}

/// Compiles a function with slope 1 on both tails and `2l` local extremes
/// into at most `k` linear layers and `k + l - 1` activation stages.
pub fn compile_grad1_tails(f: &CpwlFunction) -> Result<Network> {
    aligned(grad1_program(f)?, f).to_network()
}

/// `f` on `[lo, hi]` continued with slope 1 outside.
fn with_unit_tails(f: &CpwlFunction, lo: f64, hi: f64) -> Result<CpwlFunction> {
    let mut t = Vec::with_capacity(f.breakpoints().len() + 2);
    let mut s = Vec::with_capacity(t.capacity() + 1);
    t.push(lo);
    s.push(1.0);
    t.extend_from_slice(f.breakpoints());
    s.extend_from_slice(f.slopes());
    t.push(hi);
    s.push(1.0);
    CpwlFunction::new(t, s, (lo, f.eval(lo)))
}

/// Compiles `f` restricted to `[lo, hi]`. Outside the interval the network
/// continues with slope 1.
pub fn compile_bounded(f: &CpwlFunction, lo: f64, hi: f64) -> Result<Network> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Precondition(format!("invalid interval [{lo}, {hi}]")));
    }
    if let Some(&t) = f.breakpoints().iter().find(|&&t| t <= lo || t >= hi) {
        return Err(Error::Precondition(format!("breakpoint {t} is outside ({lo}, {hi})")));
    }
    compile_grad1_tails(&with_unit_tails(f, lo, hi)?)
}

/// Compiles `f` exactly on the whole real line.
pub fn compile(f: &CpwlFunction) -> Result<Network> {
    let mut prog = unbounded_program(f)?;
    prog.normalize();
    prog.to_network()
}

/// Program equal to `f` everywhere (constant included).
fn unbounded_program(f: &CpwlFunction) -> Result<Program> {
    let k = f.nonlinearity_count();
    let (ss, st) = (f.left_tail_slope(), f.right_tail_slope());
    if k == 0 {
        let mut prog = Program::default();
        prog.push(Stage::Affine { scale: ss, shift: f.eval(0.0) });
        return Ok(prog);
    }
    if ss >= 0.0 && st >= 0.0 {
        return nonnegative_tails_program(f);
    }
    if ss <= 0.0 && st <= 0.0 {
        // f(x) = f^(-x) where f^ has non-negative tails.
        let mut prog = Program::default();
        prog.push(Stage::Affine { scale: -1.0, shift: 0.0 });
        prog.extend(nonnegative_tails_program(&mirrored(f)?)?);
        return Ok(prog);
    }
    let t = f.breakpoints();
    let pick = |better: &dyn Fn(f64, f64) -> bool| {
        (1..k).fold(0, |best, i| if better(f.knot_value(i), f.knot_value(best)) { i } else { best })
    };
    if ss < 0.0 {
        // f = |g| + m with m the global minimum.
        let im = pick(&|a, b| a < b);
        let (vm, m) = (t[im], f.knot_value(im));
        let g = folded(f, im)?;
        let mut prog = unbounded_program(&g)?;
        prog.push(Stage::Scalar(NActParams::ABS));
        prog.push(Stage::Affine { scale: 1.0, shift: m });
        debug_assert!((prog.eval(vm) - m).abs() < 1e-6);
        Ok(prog)
    } else {
        // f = M - |g| with M the global maximum.
        let im = pick(&|a, b| a > b);
        let big = f.knot_value(im);
        let g = folded(f, im)?;
        let mut prog = unbounded_program(&g)?;
        prog.push(Stage::Scalar(NActParams::ABS));
        prog.push(Stage::Affine { scale: 1.0, shift: -big });
        prog.push(Stage::Affine { scale: -1.0, shift: 0.0 });
        Ok(prog)
    }
}

/// `x -> f(-x)`.
fn mirrored(f: &CpwlFunction) -> Result<CpwlFunction> {
    let t = f.breakpoints().iter().rev().map(|t| -t).collect();
    let s = f.slopes().iter().rev().map(|s| -s).collect();
    let (x0, y0) = f.anchor();
    CpwlFunction::new(t, s, (-x0, y0))
}

/// `f - e` left of breakpoint `i` and `e - f` right of it, where `e` is the
/// value at the breakpoint; both tails of the result are non-positive when
/// `e` is the global extremum.
fn folded(f: &CpwlFunction, i: usize) -> Result<CpwlFunction> {
    let e = f.knot_value(i);
    let sign = if f.left_tail_slope() < 0.0 { 1.0 } else { -1.0 };
    let slopes = f.slopes().iter().enumerate().map(|(j, &s)| if j <= i { sign * s } else { -sign * s }).collect();
    let t = f.breakpoints();
    CpwlFunction::new(t.to_vec(), slopes, (t[i], 0.0)).inspect(|g| {
        debug_assert!(g.eval(t[i]).abs() <= 1e-12 * (1.0 + e.abs()));
    })
}

/// Width-2 adapter with slope `s` on one side of `v` and slope 1 on the
/// other. `right` selects the side carrying slope `s`.
fn tail_adapter(s: f64, v: f64, right: bool) -> Result<Stage> {
    let SlopeCoeffs { alpha, beta } = slope_coeffs(s)?;
    let sign = if right { -1.0 } else { 1.0 };
    Ok(Stage::Pair {
        expand: [alpha, beta],
        expand_bias: [0.0, -beta * v],
        lanes: [NActParams::IDENTITY, NActParams::ABS],
        contract: [alpha, sign * beta],
        contract_bias: beta * beta * v,
    })
}

/// Program for `f` with both tail slopes non-negative: `f = g o h`, where
/// `g` agrees with `f` on `[v_s, v_t]` and has slope-1 tails, and `h` is the
/// identity on `[v_s, v_t]` with the tail slopes of `f` outside.
fn nonnegative_tails_program(f: &CpwlFunction) -> Result<Program> {
    let t = f.breakpoints();
    let k = t.len();
    let (ss, st) = (f.left_tail_slope(), f.right_tail_slope());
    let values: Vec<f64> = (0..k).map(|i| f.knot_value(i)).collect();
    let lowest = values.iter().copied().fold(f64::INFINITY, f64::min);
    let highest = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vs = if ss > 0.0 { t[0] - (values[0] - lowest) / ss } else { t[0] };
    let vt = if st > 0.0 { t[k - 1] + (highest - values[k - 1]) / st } else { t[k - 1] };

    let mut gt = Vec::with_capacity(k + 2);
    let mut gs = Vec::with_capacity(k + 3);
    gs.push(1.0);
    if vs < t[0] {
        gt.push(vs);
        gs.push(ss);
    }
    gt.extend_from_slice(t);
    gs.extend_from_slice(&f.slopes()[1..k]);
    if vt > t[k - 1] {
        gs.push(st);
        gt.push(vt);
    }
    gs.push(1.0);
    let g = CpwlFunction::new(gt, gs, (t[0], values[0]))?;

    let mut prog = Program::default();
    if !is_one(st) {
        prog.push(tail_adapter(st, vt, true)?);
    }
    if !is_one(ss) {
        prog.push(tail_adapter(ss, vs, false)?);
    }
    prog.extend(grad1_program(&g)?);
    Ok(aligned(prog, f))
}

#[cfg(test)]
mod tests;
