//! Exact 1-Lipschitz continuous piecewise-linear (1-CPWL) scalar functions.
//!
//! A [`CpwlFunction`] is stored as its sorted breakpoints, one slope per
//! segment and a single anchor point that fixes the additive constant.
//! Values are accumulated from the anchor, so the function is continuous by
//! construction.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

/// Adjacent slopes closer than this are considered equal and merged.
pub const SLOPE_MERGE_TOL: f64 = 1e-12;

/// Number of uniform grid points in the probe set of [`CpwlFunction::max_abs_diff`].
pub const PROBE_GRID_POINTS: usize = 1001;

/// A 1-CPWL function `R -> R`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpwlFunction {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    anchor: (f64, f64),
    /// `f(breakpoints[i])`.
    knot_values: Vec<f64>,
    /// Index of the segment containing the anchor.
    anchor_segment: usize,
}

/// Whether a local extremum is a maximum or a minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Max,
    Min,
}

/// A local extreme point, always located at a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub position: f64,
    /// Index into [`CpwlFunction::breakpoints`].
    pub index: usize,
    pub kind: ExtremumKind,
}

impl CpwlFunction {
    /// Validates and normalizes a function.
    ///
    /// Adjacent slopes within [`SLOPE_MERGE_TOL`] are merged and the
    /// breakpoint between them dropped, so the breakpoint count equals the
    /// number of genuine non-linearities.
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, anchor: (f64, f64)) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidFunction(format!(
                "{} breakpoints need {} slopes, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                slopes.len()
            )));
        }
        if !anchor.0.is_finite() || !anchor.1.is_finite() {
            return Err(Error::InvalidFunction("anchor must be finite".into()));
        }
        if let Some(t) = breakpoints.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidFunction(format!("non-finite breakpoint {t}")));
        }
        for &s in &slopes {
            if !s.is_finite() {
                return Err(Error::InvalidFunction(format!("non-finite slope {s}")));
            }
            if s.abs() > 1.0 {
                return Err(Error::SlopeOutOfRange(s));
            }
        }
        if let Some(w) = breakpoints.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidFunction(format!(
                "breakpoints must be strictly increasing ({} >= {})",
                w[0], w[1]
            )));
        }

        let mut merged_bps = Vec::with_capacity(breakpoints.len());
        let mut merged_slopes = Vec::with_capacity(slopes.len());
        merged_slopes.push(slopes[0]);
        for (t, &s) in breakpoints.iter().zip(&slopes[1..]) {
            let prev = *merged_slopes.last().unwrap();
            if (s - prev).abs() > SLOPE_MERGE_TOL {
                merged_bps.push(*t);
                merged_slopes.push(s);
            }
        }
        Ok(Self::from_parts(merged_bps, merged_slopes, anchor))
    }

    fn from_parts(breakpoints: Vec<f64>, slopes: Vec<f64>, anchor: (f64, f64)) -> Self {
        let (x0, y0) = anchor;
        let k = breakpoints.len();
        let seg = breakpoints.partition_point(|&t| t < x0);
        let mut knot_values = alloc::vec![0.0; k];
        if seg < k {
            knot_values[seg] = y0 + slopes[seg] * (breakpoints[seg] - x0);
            for i in seg + 1..k {
                knot_values[i] =
                    knot_values[i - 1] + slopes[i] * (breakpoints[i] - breakpoints[i - 1]);
            }
        }
        if seg > 0 {
            knot_values[seg - 1] = y0 + slopes[seg] * (breakpoints[seg - 1] - x0);
            for i in (0..seg - 1).rev() {
                knot_values[i] =
                    knot_values[i + 1] - slopes[i + 1] * (breakpoints[i + 1] - breakpoints[i]);
            }
        }
        Self { breakpoints, slopes, anchor, knot_values, anchor_segment: seg }
    }

    /// A linear function `x -> slope * x + intercept`.
    pub fn linear(slope: f64, intercept: f64) -> Result<Self> {
        Self::new(Vec::new(), alloc::vec![slope], (0.0, intercept))
    }

    /// The N-function: slopes `+1, -1, +1` with breakpoints at `-1/2` and `1/2`.
    pub fn n_function() -> Self {
        Self::from_parts(alloc::vec![-0.5, 0.5], alloc::vec![1.0, -1.0, 1.0], (0.0, 0.0))
    }

    /// Draws `k` distinct breakpoints uniformly from `[lo, hi]`, `k + 1`
    /// slopes uniformly from `[-1, 1]` (adjacent ones kept distinct) and an
    /// anchor `((lo + hi) / 2, U[-1, 1])`.
    pub fn random<R: Rng + ?Sized>(k: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        assert!(lo < hi, "random: need lo < hi");
        let mut breakpoints: Vec<f64> = Vec::with_capacity(k);
        while breakpoints.len() < k {
            let t = rng.random_range(lo..=hi);
            if !breakpoints.contains(&t) {
                breakpoints.push(t);
            }
        }
        breakpoints.sort_by(f64::total_cmp);
        let mut slopes: Vec<f64> = Vec::with_capacity(k + 1);
        while slopes.len() < k + 1 {
            let s = rng.random_range(-1.0..=1.0);
            match slopes.last() {
                Some(prev) if (s - prev).abs() <= 1e-9 => continue,
                _ => slopes.push(s),
            }
        }
        let anchor = (0.5 * (lo + hi), rng.random_range(-1.0..=1.0));
        Self::from_parts(breakpoints, slopes, anchor)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn anchor(&self) -> (f64, f64) {
        self.anchor
    }

    /// Number of non-linearities `k`.
    pub fn nonlinearity_count(&self) -> usize {
        self.breakpoints.len()
    }

    /// Slope before the first breakpoint.
    pub fn left_tail_slope(&self) -> f64 {
        self.slopes[0]
    }

    /// Slope after the last breakpoint.
    pub fn right_tail_slope(&self) -> f64 {
        self.slopes[self.slopes.len() - 1]
    }

    /// `f(breakpoints[i])`.
    pub fn knot_value(&self, i: usize) -> f64 {
        self.knot_values[i]
    }

    /// Index of the segment containing `x`; segment `j` lies between
    /// breakpoints `j - 1` and `j`.
    pub fn segment_of(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&t| t < x)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let seg = self.segment_of(x);
        if seg == self.anchor_segment {
            self.anchor.1 + self.slopes[seg] * (x - self.anchor.0)
        } else if seg == 0 {
            self.knot_values[0] + self.slopes[0] * (x - self.breakpoints[0])
        } else {
            self.knot_values[seg - 1] + self.slopes[seg] * (x - self.breakpoints[seg - 1])
        }
    }

    /// Local extreme points, left to right.
    ///
    /// An extremum sits at the breakpoint where the sign of the nearest
    /// non-zero slopes flips. A plateau between opposite-sign slopes yields a
    /// single extremum at the plateau's left edge; plateaus between
    /// same-sign slopes yield none.
    pub fn extremes(&self) -> Vec<Extremum> {
        let mut out = Vec::new();
        let mut last: Option<(usize, f64)> = None;
        for (seg, &s) in self.slopes.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            if let Some((prev_seg, prev)) = last {
                if (prev > 0.0) != (s > 0.0) {
                    out.push(Extremum {
                        position: self.breakpoints[prev_seg],
                        index: prev_seg,
                        kind: if prev > 0.0 { ExtremumKind::Max } else { ExtremumKind::Min },
                    });
                }
            }
            last = Some((seg, s));
        }
        out
    }

    /// The probe set used for sup-norm comparisons on `[lo, hi]`: both
    /// endpoints, every breakpoint inside, every segment midpoint and a
    /// uniform grid of [`PROBE_GRID_POINTS`] points. Sorted, no duplicates.
    pub fn probe_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut knots: Vec<f64> = Vec::with_capacity(self.breakpoints.len() + 2);
        knots.push(lo);
        knots.extend(self.breakpoints.iter().copied().filter(|&t| t > lo && t < hi));
        knots.push(hi);
        let mut probes = knots.clone();
        probes.extend(knots.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        let n = PROBE_GRID_POINTS - 1;
        probes.extend((0..=n).map(|i| lo + (hi - lo) * (i as f64) / (n as f64)));
        probes.sort_by(f64::total_cmp);
        probes.dedup();
        probes
    }

    /// Maximum of `|f(x) - g(x)|` over [`Self::probe_points`]. When `g` is
    /// piecewise linear with breakpoints among the probes this is the exact
    /// sup-norm distance on `[lo, hi]`.
    pub fn max_abs_diff(&self, g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) {
            return Err(Error::InvalidFunction(format!("empty interval [{lo}, {hi}]")));
        }
        let mut worst = 0.0f64;
        for x in self.probe_points(lo, hi) {
            let gx = g(x);
            if !gx.is_finite() {
                return Err(Error::NonFinite(x));
            }
            worst = worst.max((self.eval(x) - gx).abs());
        }
        Ok(worst)
    }
}
