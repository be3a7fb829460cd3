use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::certify::{CertExample, CertReport, DEFAULT_MARGIN_FACTOR};
use super::loss::{mse_loss, offset_ce_loss};
use super::network::Network;
use super::optim::{LossKind, Sgd, TrainConfig};
use crate::error::{Error, Result};
use crate::layers::Mode;

/// Supervision for one example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    Values(&'a [f64]),
    Class(usize),
}

/// Random-access training data.
pub trait Dataset {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn input_dim(&self) -> usize;

    /// Writes example `i` into `out` (of length [`Self::input_dim`]).
    fn input(&self, i: usize, out: &mut [f64]);

    fn target(&self, i: usize) -> Target<'_>;

    /// Number of classes for classification data.
    fn classes(&self) -> Option<usize> {
        None
    }

    /// Per-feature mean over all examples.
    fn mean(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.input_dim()];
        let mut x = vec![0.0; self.input_dim()];
        for i in 0..self.len() {
            self.input(i, &mut x);
            for (s, v) in sum.iter_mut().zip(&x) {
                *s += v;
            }
        }
        let n = self.len().max(1) as f64;
        sum.into_iter().map(|s| s / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Targets {
    Values { dim: usize, data: Vec<f64> },
    Classes { count: usize, labels: Vec<usize> },
}

/// A dataset held in memory as a flat row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct InMemoryDataset {
    dim: usize,
    inputs: Vec<f64>,
    targets: Targets,
}

impl InMemoryDataset {
    /// Regression data: every input row has a vector target.
    pub fn regression(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::ShapeMismatch { expected: inputs.len(), found: targets.len() });
        }
        let tdim = targets.first().map_or(0, Vec::len);
        let data = flatten(targets, tdim)?;
        let (dim, inputs) = flatten_inputs(inputs)?;
        Ok(Self { dim, inputs, targets: Targets::Values { dim: tdim, data } })
    }

    /// Classification data with labels in `0..classes`.
    pub fn classification(inputs: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::ShapeMismatch { expected: inputs.len(), found: labels.len() });
        }
        let (dim, inputs) = flatten_inputs(inputs)?;
        Self::from_flat(dim, inputs, labels, classes)
    }

    /// Classification data from a flat row-major input array.
    pub fn from_flat(dim: usize, inputs: Vec<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.len() != dim * labels.len() {
            return Err(Error::ShapeMismatch { expected: dim * labels.len(), found: inputs.len() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label, classes });
        }
        Ok(Self { dim, inputs, targets: Targets::Classes { count: classes, labels } })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// The first `n` examples.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let targets = match &self.targets {
            Targets::Values { dim, data } => Targets::Values { dim: *dim, data: data[..n * dim].to_vec() },
            Targets::Classes { count, labels } => Targets::Classes { count: *count, labels: labels[..n].to_vec() },
        };
        Self { dim: self.dim, inputs: self.inputs[..n * self.dim].to_vec(), targets }
    }
}

fn flatten(rows: Vec<Vec<f64>>, dim: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        if r.len() != dim {
            return Err(Error::ShapeMismatch { expected: dim, found: r.len() });
        }
        out.extend(r);
    }
    Ok(out)
}

fn flatten_inputs(rows: Vec<Vec<f64>>) -> Result<(usize, Vec<f64>)> {
    let dim = rows.first().map_or(0, Vec::len);
    Ok((dim, flatten(rows, dim)?))
}

impl Dataset for InMemoryDataset {
    fn len(&self) -> usize {
        match &self.targets {
            Targets::Values { dim, data } if *dim > 0 => data.len() / dim,
            Targets::Values { .. } => self.inputs.len().checked_div(self.dim).unwrap_or(0),
            Targets::Classes { labels, .. } => labels.len(),
        }
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn input(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(i));
    }

    fn target(&self, i: usize) -> Target<'_> {
        match &self.targets {
            Targets::Values { dim, data } => Target::Values(&data[i * dim..(i + 1) * dim]),
            Targets::Classes { labels, .. } => Target::Class(labels[i]),
        }
    }

    fn classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes { count, .. } => Some(*count),
            Targets::Values { .. } => None,
        }
    }
}

/// Metrics of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch.
    pub loss: f64,
    pub accuracy: Option<f64>,
    /// Certified robust accuracy at each of the standard radii.
    pub cra: Option<[f64; 4]>,
}

/// Per-epoch training history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

type Augment<'a> = Box<dyn FnMut(&mut [f64], &mut ChaCha8Rng) + 'a>;
type EpochHook<'a> = Box<dyn FnMut(&EpochRecord, &Network) + 'a>;

/// Mini-batch trainer. Deterministic for a fixed seed.
///
/// Classification metrics are computed on the evaluation set when one is
/// given and otherwise on the scores seen during the training pass.
pub struct Trainer<'a> {
    config: TrainConfig,
    eval: Option<&'a dyn Dataset>,
    augment: Option<Augment<'a>>,
    on_epoch: Option<EpochHook<'a>>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig) -> Self {
        Self { config, eval: None, augment: None, on_epoch: None }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn with_eval(mut self, data: &'a dyn Dataset) -> Self {
        self.eval = Some(data);
        self
    }

    /// In-place input transformation applied to every training example.
    pub fn with_augment(mut self, f: impl FnMut(&mut [f64], &mut ChaCha8Rng) + 'a) -> Self {
        self.augment = Some(Box::new(f));
        self
    }

    /// Called after every epoch with the finished record.
    pub fn on_epoch(mut self, f: impl FnMut(&EpochRecord, &Network) + 'a) -> Self {
        self.on_epoch = Some(Box::new(f));
        self
    }

    pub fn run(&mut self, net: &mut Network, data: &dyn Dataset) -> Result<History> {
        let cfg = self.config.clone();
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Precondition("training data is empty".into()));
        }
        if data.input_dim() != net.input_dim() {
            return Err(Error::ShapeMismatch { expected: net.input_dim(), found: data.input_dim() });
        }
        if let Some(classes) = data.classes() {
            if classes != net.output_dim() {
                return Err(Error::ShapeMismatch { expected: net.output_dim(), found: classes });
            }
            if cfg.loss == LossKind::Mse {
                return Err(Error::InvalidConfig("mse loss needs regression targets".into()));
            }
        } else if cfg.loss == LossKind::OffsetCe {
            return Err(Error::InvalidConfig("offset cross-entropy needs class labels".into()));
        }
        net.set_nact_scale(cfg.nact_lr_scale)?;
        if cfg.subtract_mean {
            net.set_input_offset(Some(data.mean()))?;
        }
        if net.is_stale() {
            net.refresh()?;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut sgd = Sgd::from_config(&cfg);
        let n = data.len();
        let steps_per_epoch = n.div_ceil(cfg.batch_size);
        let total = steps_per_epoch * cfg.epochs;
        let mut order: Vec<usize> = (0..n).collect();
        let mut x = vec![0.0; data.input_dim()];
        let offset = cfg.effective_offset();
        let mut history = History::default();
        let mut step = 0;

        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut seen = Vec::new();
            for batch in order.chunks(cfg.batch_size) {
                let mut acc = net.new_accumulator();
                for &i in batch {
                    data.input(i, &mut x);
                    if let Some(aug) = self.augment.as_mut() {
                        aug(&mut x, &mut rng);
                    }
                    let (out, tape) = net.forward(&x, Mode::Train)?;
                    let (loss, grad) = match data.target(i) {
                        Target::Values(t) => mse_loss(&out, t)?,
                        Target::Class(label) => {
                            if self.eval.is_none() {
                                seen.push(CertExample::from_scores(&out, label, DEFAULT_MARGIN_FACTOR)?);
                            }
                            offset_ce_loss(&out, label, offset, cfg.temperature)?
                        }
                    };
                    if !loss.is_finite() {
                        return Err(Error::Diverged { epoch, loss });
                    }
                    loss_sum += loss;
                    net.accumulate(&tape, &grad, &mut acc)?;
                }
                let grads = net.finish(acc, 1.0 / batch.len() as f64)?;
                let lr = cfg.learning_rate_at(step, total);
                sgd.step(net, &grads, lr)?;
                step += 1;
            }
            let loss = loss_sum / n as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            let report = match (self.eval, data.classes()) {
                (Some(eval), Some(_)) => Some(evaluate(net, eval)?),
                (None, Some(_)) => Some(CertReport::from_examples(seen)),
                _ => None,
            };
            let record = EpochRecord {
                epoch,
                loss,
                accuracy: report.as_ref().map(|r| r.accuracy),
                cra: report.as_ref().map(|r| r.cra),
            };
            if let Some(hook) = self.on_epoch.as_mut() {
                hook(&record, net);
            }
            history.records.push(record);
        }
        Ok(history)
    }
}

fn evaluate(net: &Network, data: &dyn Dataset) -> Result<CertReport> {
    super::certify::certify(net, data, DEFAULT_MARGIN_FACTOR)
}

/// Trains `net` on `data` with `config`; see [`Trainer`].
pub fn train(net: &mut Network, data: &dyn Dataset, config: &TrainConfig) -> Result<History> {
    Trainer::new(config.clone()).run(net, data)
}
