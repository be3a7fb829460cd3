//! 1-Lipschitz dense layers.
//!
//! - **AOL**: `f(x) = P D x + b` with the diagonal rescaling
//!   `D_ii = (sum_j |P^T P|_ij)^(-1/2)`.
//! - **CPL**: `f(x) = x - (2 / ||P||_2^2) P^T relu(P x + b)`, with `||P||_2`
//!   estimated by warm-started power iteration.
//! - **SOC**: `f(x) = exp(A) x + b` for the skew-symmetric part
//!   `A = (P - P^T) / 2`, with the exponential truncated after a fixed number
//!   of series terms.
//! - **Linear**: an unconstrained `P x + b`, used for baselines and for the
//!   fixed norm-bounded matrices emitted by the compiler.
//!
//! Reverse-mode products treat the CPL spectral-norm estimate as a constant.

mod audit;
mod spectral;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, sub, Matrix};

pub use audit::{lipschitz_audit, AuditReport};
pub use spectral::{spectral_norm, PowerIterState};

/// Parameterization of a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Aol,
    Cpl,
    Soc,
    Linear,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Aol => "aol",
            Self::Cpl => "cpl",
            Self::Soc => "soc",
            Self::Linear => "linear",
        }
    }

    pub fn is_constrained(self) -> bool {
        !matches!(self, Self::Linear)
    }
}

/// Number of exponential-series terms used by SOC layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SocTerms {
    pub train: usize,
    pub eval: usize,
}

impl Default for SocTerms {
    fn default() -> Self {
        Self { train: 5, eval: 12 }
    }
}

/// Whether a forward pass belongs to training or inference. Only SOC layers
/// behave differently (series length).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Raw parameters of a dense layer.
///
/// Shapes: AOL and Linear map `cols -> rows` with a bias of length `rows`;
/// CPL maps `cols -> cols` with a bias of length `rows` (the hidden size);
/// SOC is square with a bias of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub kind: LayerKind,
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub soc_terms: SocTerms,
}

impl DenseParams {
    pub fn new(kind: LayerKind, weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        let params = Self { kind, weight, bias, soc_terms: SocTerms::default() };
        params.validate()?;
        Ok(params)
    }

    /// A layer with zero bias.
    pub fn unbiased(kind: LayerKind, weight: Matrix) -> Result<Self> {
        let n = weight.rows();
        Self::new(kind, weight, vec![0.0; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias.len() != self.weight.rows() {
            return Err(Error::ShapeMismatch { expected: self.weight.rows(), found: self.bias.len() });
        }
        if self.kind == LayerKind::Soc && !self.weight.is_square() {
            return Err(Error::ShapeMismatch { expected: self.weight.rows(), found: self.weight.cols() });
        }
        if !self.weight.is_finite() || self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidNetwork("non-finite layer parameters".into()));
        }
        if self.kind == LayerKind::Soc && (self.soc_terms.train == 0 || self.soc_terms.eval == 0) {
            return Err(Error::InvalidNetwork("SOC needs at least one series term".into()));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        match self.kind {
            LayerKind::Cpl => self.weight.cols(),
            _ => self.weight.rows(),
        }
    }
}

/// AOL rescaling `D_ii = (sum_j |P^T P|_ij)^(-1/2)`. Columns of `P` that are
/// entirely zero get `D_ii = 1`.
pub fn aol_diag(p: &Matrix) -> Vec<f64> {
    aol_diag_from_gram(&p.gram())
}

fn aol_diag_from_gram(gram: &Matrix) -> Vec<f64> {
    (0..gram.rows())
        .map(|i| {
            let s: f64 = gram.row(i).iter().map(|v| v.abs()).sum();
            if s > 0.0 {
                1.0 / libm::sqrt(s)
            } else {
                1.0
            }
        })
        .collect()
}

/// `P D x + b`.
pub fn aol_forward(params: &DenseParams, x: &[f64]) -> Result<Vec<f64>> {
    check_len(params.in_dim(), x)?;
    let d = aol_diag(&params.weight);
    let scaled: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a * b).collect();
    Ok(add(params.weight.matvec(&scaled), &params.bias))
}

/// CPL forward pass using (and refreshing) the power-iteration state.
pub fn cpl_forward(params: &DenseParams, x: &[f64], state: &mut PowerIterState) -> Result<Vec<f64>> {
    check_len(params.in_dim(), x)?;
    let sigma = spectral_norm(&params.weight, state);
    Ok(cpl_apply(&params.weight, &params.bias, sigma, x))
}

/// Truncated `exp(A) x + b` with `terms` series terms beyond the identity.
pub fn soc_forward(params: &DenseParams, x: &[f64], terms: usize) -> Result<Vec<f64>> {
    check_len(params.in_dim(), x)?;
    let a = skew_part(&params.weight);
    Ok(add(exp_series(&a, x, terms), &params.bias))
}

fn check_len(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::ShapeMismatch { expected, found: x.len() });
    }
    Ok(())
}

fn add(mut v: Vec<f64>, b: &[f64]) -> Vec<f64> {
    for (a, b) in v.iter_mut().zip(b) {
        *a += b;
    }
    v
}

/// Below this spectral norm a CPL layer is the identity.
const CPL_DEGENERATE_NORM: f64 = 1e-12;

fn cpl_apply(p: &Matrix, b: &[f64], sigma: f64, x: &[f64]) -> Vec<f64> {
    if sigma < CPL_DEGENERATE_NORM {
        return x.to_vec();
    }
    let z = add(p.matvec(x), b);
    let a: Vec<f64> = z.into_iter().map(|v| v.max(0.0)).collect();
    let c = 2.0 / (sigma * sigma);
    let mut y = x.to_vec();
    for (yi, ti) in y.iter_mut().zip(p.tr_matvec(&a)) {
        *yi -= c * ti;
    }
    y
}

/// `(P - P^T) / 2`.
pub fn skew_part(p: &Matrix) -> Matrix {
    Matrix::from_fn(p.rows(), p.cols(), |r, c| 0.5 * (p[(r, c)] - p[(c, r)]))
}

/// `sum_{j=0..=terms} A^j x / j!`.
fn exp_series(a: &Matrix, x: &[f64], terms: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    let mut term = x.to_vec();
    for j in 1..=terms {
        term = a.matvec(&term);
        let inv = 1.0 / j as f64;
        for (o, t) in out.iter_mut().zip(term.iter_mut()) {
            *t *= inv;
            *o += *t;
        }
    }
    out
}

/// Quantities derived from the raw parameters; refreshed whenever they change.
#[derive(Debug, Clone, PartialEq)]
enum Derived {
    Aol { gram: Matrix, diag: Vec<f64>, weight: Matrix },
    Soc { skew: Matrix },
    Plain,
}

/// A dense layer together with its derived operator and, for CPL, the
/// power-iteration cache.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    params: DenseParams,
    derived: Derived,
    power: PowerIterState,
    sigma: f64,
}

/// Gradient buffers for one dense layer.
///
/// During accumulation `weight` holds the gradient with respect to the
/// derived operator (`P D` for AOL, `A` for SOC, `P` otherwise);
/// [`DenseLayer::finish`] maps it back to `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAccum {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Vector-Jacobian products of a dense layer for a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVjp {
    pub input: Vec<f64>,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(params: DenseParams) -> Result<Self> {
        Self::with_power_state(params, PowerIterState::default())
    }

    pub fn with_power_state(params: DenseParams, power: PowerIterState) -> Result<Self> {
        params.validate()?;
        let mut layer = Self { derived: Derived::Plain, params, power, sigma: 0.0 };
        layer.refresh();
        layer.update_spectral_norm();
        Ok(layer)
    }

    pub fn params(&self) -> &DenseParams {
        &self.params
    }

    /// Mutable access to the raw parameters. Call [`Self::refresh`] (and,
    /// for CPL, [`Self::update_spectral_norm`]) afterwards.
    pub(crate) fn params_mut(&mut self) -> &mut DenseParams {
        &mut self.params
    }

    pub fn kind(&self) -> LayerKind {
        self.params.kind
    }

    pub fn in_dim(&self) -> usize {
        self.params.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.params.out_dim()
    }

    /// Current spectral-norm estimate used by CPL.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn power_state(&self) -> &PowerIterState {
        &self.power
    }

    /// Recomputes the AOL rescaling or the SOC skew part from the raw
    /// parameters. The CPL norm estimate is left untouched.
    pub fn refresh(&mut self) {
        let p = &self.params.weight;
        self.derived = match self.params.kind {
            LayerKind::Aol => {
                let gram = p.gram();
                let diag = aol_diag_from_gram(&gram);
                let weight = p.scale_columns(&diag);
                Derived::Aol { gram, diag, weight }
            }
            LayerKind::Soc => Derived::Soc { skew: skew_part(p) },
            LayerKind::Cpl | LayerKind::Linear => Derived::Plain,
        };
    }

    /// Runs warm-started power iteration for CPL layers.
    pub fn update_spectral_norm(&mut self) -> f64 {
        if self.params.kind == LayerKind::Cpl {
            self.sigma = spectral_norm(&self.params.weight, &mut self.power);
        }
        self.sigma
    }

    /// The matrix applied to the input by AOL and Linear layers.
    pub fn effective_weight(&self) -> Option<&Matrix> {
        match (&self.derived, self.params.kind) {
            (Derived::Aol { weight, .. }, _) => Some(weight),
            (_, LayerKind::Linear) => Some(&self.params.weight),
            _ => None,
        }
    }

    /// AOL diagonal, if this is an AOL layer.
    pub fn aol_diag(&self) -> Option<&[f64]> {
        match &self.derived {
            Derived::Aol { diag, .. } => Some(diag),
            _ => None,
        }
    }

    fn soc_terms(&self, mode: Mode) -> usize {
        match mode {
            Mode::Train => self.params.soc_terms.train,
            Mode::Eval => self.params.soc_terms.eval,
        }
    }

    pub fn forward(&self, x: &[f64], mode: Mode) -> Vec<f64> {
        let b = &self.params.bias;
        match &self.derived {
            Derived::Aol { weight, .. } => add(weight.matvec(x), b),
            Derived::Soc { skew } => add(exp_series(skew, x, self.soc_terms(mode)), b),
            Derived::Plain => match self.params.kind {
                LayerKind::Cpl => cpl_apply(&self.params.weight, b, self.sigma, x),
                _ => add(self.params.weight.matvec(x), b),
            },
        }
    }

    pub fn new_accum(&self) -> DenseAccum {
        DenseAccum {
            weight: Matrix::zeros(self.params.weight.rows(), self.params.weight.cols()),
            bias: vec![0.0; self.params.bias.len()],
        }
    }

    /// Adds the parameter contributions of one example into `acc` and
    /// returns the gradient with respect to the input.
    pub fn accumulate(&self, x: &[f64], upstream: &[f64], mode: Mode, acc: &mut DenseAccum) -> Vec<f64> {
        match &self.derived {
            Derived::Aol { weight, .. } => {
                acc.weight.add_outer(1.0, upstream, x);
                add_into(&mut acc.bias, upstream);
                weight.tr_matvec(upstream)
            }
            Derived::Soc { skew } => {
                add_into(&mut acc.bias, upstream);
                soc_accumulate(skew, self.soc_terms(mode), x, upstream, &mut acc.weight)
            }
            Derived::Plain => match self.params.kind {
                LayerKind::Cpl => self.cpl_accumulate(x, upstream, acc),
                _ => {
                    acc.weight.add_outer(1.0, upstream, x);
                    add_into(&mut acc.bias, upstream);
                    self.params.weight.tr_matvec(upstream)
                }
            },
        }
    }

    fn cpl_accumulate(&self, x: &[f64], g: &[f64], acc: &mut DenseAccum) -> Vec<f64> {
        let p = &self.params.weight;
        if self.sigma < CPL_DEGENERATE_NORM {
            return g.to_vec();
        }
        let c = 2.0 / (self.sigma * self.sigma);
        let z = add(p.matvec(x), &self.params.bias);
        let pg = p.matvec(g);
        let mut act = Vec::with_capacity(z.len());
        let mut delta = Vec::with_capacity(z.len());
        for (&zi, &pgi) in z.iter().zip(&pg) {
            act.push(zi.max(0.0));
            delta.push(if zi >= 0.0 { -c * pgi } else { 0.0 });
        }
        acc.weight.add_outer(-c, &act, g);
        acc.weight.add_outer(1.0, &delta, x);
        add_into(&mut acc.bias, &delta);
        let mut dx = g.to_vec();
        add_into(&mut dx, &p.tr_matvec(&delta));
        dx
    }

    /// Converts accumulated gradients into gradients with respect to the raw
    /// parameters `(P, b)`.
    pub fn finish(&self, acc: DenseAccum) -> (Matrix, Vec<f64>) {
        let DenseAccum { weight: dw, bias } = acc;
        let dp = match &self.derived {
            Derived::Aol { gram, diag, .. } => {
                let p = &self.params.weight;
                let mut dp = dw.scale_columns(diag);
                // Chain rule through D_i = r_i^(-1/2), r_i = sum_j |G_ij|, G = P^T P.
                let n = diag.len();
                let mut e = vec![0.0; n];
                for (i, ei) in e.iter_mut().enumerate() {
                    let r: f64 = gram.row(i).iter().map(|v| v.abs()).sum();
                    if r > 0.0 {
                        let c: f64 = (0..p.rows()).map(|k| dw[(k, i)] * p[(k, i)]).sum();
                        *ei = -0.5 * c * diag[i] * diag[i] * diag[i];
                    }
                }
                let sym = Matrix::from_fn(n, n, |i, j| {
                    e[i] * signum(gram[(i, j)]) + e[j] * signum(gram[(j, i)])
                });
                dp.add_assign(&p.matmul(&sym));
                dp
            }
            Derived::Soc { .. } => {
                let n = dw.rows();
                Matrix::from_fn(n, n, |r, c| 0.5 * (dw[(r, c)] - dw[(c, r)]))
            }
            Derived::Plain => dw,
        };
        (dp, bias)
    }

    /// Full vector-Jacobian product for a single input.
    pub fn vjp(&self, x: &[f64], upstream: &[f64], mode: Mode) -> Result<DenseVjp> {
        check_len(self.in_dim(), x)?;
        check_len(self.out_dim(), upstream)?;
        let mut acc = self.new_accum();
        let input = self.accumulate(x, upstream, mode, &mut acc);
        let (weight, bias) = self.finish(acc);
        Ok(DenseVjp { input, weight, bias })
    }

    /// Branch identifiers of the non-smooth parts (CPL ReLU pattern, AOL
    /// absolute-value signs), used to detect kink crossings.
    pub fn branch_signature(&self, x: &[f64], out: &mut Vec<u8>) {
        match &self.derived {
            Derived::Aol { gram, .. } => {
                out.extend(gram.as_slice().iter().map(|&v| (signum(v) + 1.0) as u8));
            }
            Derived::Plain if self.params.kind == LayerKind::Cpl => {
                let z = add(self.params.weight.matvec(x), &self.params.bias);
                out.extend(z.iter().map(|&v| u8::from(v >= 0.0)));
            }
            _ => {}
        }
    }
}

/// Vector-Jacobian product of a standalone layer: `(d x, d P, d b)`.
pub fn layer_vjp(params: &DenseParams, x: &[f64], upstream: &[f64], mode: Mode) -> Result<DenseVjp> {
    DenseLayer::new(params.clone())?.vjp(x, upstream, mode)
}

fn signum(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Reverse pass of the truncated exponential for one example: adds the
/// contribution to `d A` and returns `d x`.
fn soc_accumulate(a: &Matrix, terms: usize, x: &[f64], g: &[f64], da: &mut Matrix) -> Vec<f64> {
    // powers[q] = A^q x, adjoint[r] = (A^T)^r g
    let mut powers = Vec::with_capacity(terms);
    let mut adjoint = Vec::with_capacity(terms + 1);
    powers.push(x.to_vec());
    adjoint.push(g.to_vec());
    for q in 1..=terms {
        if q < terms {
            let next = a.matvec(&powers[q - 1]);
            powers.push(next);
        }
        let next = a.tr_matvec(&adjoint[q - 1]);
        adjoint.push(next);
    }
    let mut inv_fact = vec![1.0; terms + 2];
    for j in 1..inv_fact.len() {
        inv_fact[j] = inv_fact[j - 1] / j as f64;
    }
    for r in 0..terms {
        for q in 0..terms - r {
            da.add_outer(inv_fact[r + q + 1], &adjoint[r], &powers[q]);
        }
    }
    let mut dx = vec![0.0; x.len()];
    for (j, w) in adjoint.iter().enumerate() {
        let s = inv_fact[j];
        for (d, v) in dx.iter_mut().zip(w) {
            *d += s * v;
        }
    }
    dx
}

/// `||f(x) - f(y)|| / ||x - y||`.
pub(crate) fn lipschitz_ratio(fx: &[f64], fy: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let d = sub(fx, fy);
    let e = sub(x, y);
    libm::sqrt(dot(&d, &d) / dot(&e, &e))
}

#[cfg(test)]
mod tests;
