use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use rand::Rng;

use super::loss::argmax;
use super::network::Network;
use super::train::{Dataset, Target};
use crate::error::{Error, Result};
use crate::linalg::norm;

/// Radii at which certified robust accuracy is reported.
pub const CRA_EPSILONS: [f64; 4] = [36.0 / 255.0, 72.0 / 255.0, 108.0 / 255.0, 1.0];

/// Margin factor for score maps that are jointly 1-Lipschitz.
pub const DEFAULT_MARGIN_FACTOR: f64 = SQRT_2;

/// `(top1 - top2) / sqrt 2`: no perturbation of smaller norm can change the
/// argmax of a 1-Lipschitz score map.
pub fn certified_radius(scores: &[f64]) -> Result<f64> {
    certified_radius_with(scores, DEFAULT_MARGIN_FACTOR)
}

/// `(top1 - top2) / factor`.
pub fn certified_radius_with(scores: &[f64], factor: f64) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::Precondition("certification needs at least two scores".into()));
    }
    if !(factor > 0.0) {
        return Err(Error::InvalidConfig("margin factor must be positive".into()));
    }
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &s in scores {
        if s > a {
            b = a;
            a = s;
        } else if s > b {
            b = s;
        }
    }
    Ok(((a - b) / factor).max(0.0))
}

/// Certification result for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct CertExample {
    pub predicted: usize,
    pub label: usize,
    pub correct: bool,
    pub radius: f64,
    /// Whether `radius > eps` for each entry of [`CRA_EPSILONS`].
    pub robust: [bool; 4],
}

impl CertExample {
    pub fn from_scores(scores: &[f64], label: usize, factor: f64) -> Result<Self> {
        let radius = certified_radius_with(scores, factor)?;
        let predicted = argmax(scores).expect("at least two scores");
        Ok(Self {
            predicted,
            label,
            correct: predicted == label,
            radius,
            robust: CRA_EPSILONS.map(|e| radius > e),
        })
    }

    /// Correct and robust at `CRA_EPSILONS[i]`.
    pub fn certified(&self, i: usize) -> bool {
        self.correct && self.robust[i]
    }
}

/// Per-example certificates and aggregate accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub examples: Vec<CertExample>,
    pub accuracy: f64,
    /// Certified robust accuracy at each of [`CRA_EPSILONS`].
    pub cra: [f64; 4],
}

impl CertReport {
    pub fn from_examples(examples: Vec<CertExample>) -> Self {
        let n = examples.len().max(1) as f64;
        let accuracy = examples.iter().filter(|e| e.correct).count() as f64 / n;
        let cra = core::array::from_fn(|i| examples.iter().filter(|e| e.certified(i)).count() as f64 / n);
        Self { examples, accuracy, cra }
    }
}

/// Certifies every example of a classification dataset.
pub fn certify(net: &Network, data: &dyn Dataset, factor: f64) -> Result<CertReport> {
    let mut x = alloc::vec![0.0; data.input_dim()];
    let mut examples = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        data.input(i, &mut x);
        let Target::Class(label) = data.target(i) else {
            return Err(Error::Precondition("certification needs class labels".into()));
        };
        let scores = net.predict(&x)?;
        examples.push(CertExample::from_scores(&scores, label, factor)?);
    }
    Ok(CertReport::from_examples(examples))
}

/// Outcome of [`perturbation_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerturbationCheck {
    /// Examples with a positive radius that were probed.
    pub certified: usize,
    pub perturbations: usize,
    /// Perturbations that changed the predicted class.
    pub violations: usize,
}

/// Applies `trials` random perturbations of norm `shrink * radius` to every
/// example with a positive certified radius and counts argmax changes.
pub fn perturbation_check<R: Rng + ?Sized>(
    net: &Network,
    data: &dyn Dataset,
    trials: usize,
    shrink: f64,
    rng: &mut R,
) -> Result<PerturbationCheck> {
    let mut x = alloc::vec![0.0; data.input_dim()];
    let mut out = PerturbationCheck { certified: 0, perturbations: 0, violations: 0 };
    for i in 0..data.len() {
        data.input(i, &mut x);
        let scores = net.predict(&x)?;
        let radius = certified_radius(&scores)?;
        if radius <= 0.0 {
            continue;
        }
        let class = argmax(&scores).expect("at least two scores");
        out.certified += 1;
        for _ in 0..trials {
            let mut d: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let len = norm(&d);
            if len == 0.0 {
                continue;
            }
            let s = shrink * radius / len;
            for v in &mut d {
                *v *= s;
            }
            let moved: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            out.perturbations += 1;
            if argmax(&net.predict(&moved)?) != Some(class) {
                out.violations += 1;
            }
        }
    }
    Ok(out)
}
