//! Experiment runners behind the command-line interface.
//!
//! Each `run_*` function writes its files, returns an [`Outcome`] with a JSON
//! report and never prints. The in-memory counterparts (`fit_toy`,
//! `train_classifier`, ...) are what the tests exercise.

use std::f64::consts::SQRT_2;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lipnet_core::compiler::{self, CompileReport};
use lipnet_core::layers::{lipschitz_audit, LayerKind};
use lipnet_core::nn::{
    build_mlp, certify, grad_check, perturbation_check, ActivationChoice, CertReport, Dataset, History,
    InMemoryDataset, Layer, LossKind, MlpSpec, NActInit, Network, PerturbationCheck, Schedule, TrainConfig,
    Trainer, DEFAULT_EPSILON,
};
use lipnet_core::pwl::CpwlFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{augment_cifar, load_cifar10, two_moons, MOONS_NOISE};
use crate::error::{Error, Result};
use crate::formats::{read_function, read_network, write_json, write_network};
use crate::report::{save_cert_report, save_history};

/// Result of a command: whether its checks passed and a JSON summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub report: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationArg {
    Nact,
    Maxmin,
    Abs,
    /// ReLU with unconstrained linear layers.
    ReluUnconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerTypeArg {
    Aol,
    Cpl,
    Soc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NActInitArg {
    Absid,
    Zero,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetArg {
    Moons,
    Cifar10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

impl From<NActInitArg> for NActInit {
    fn from(a: NActInitArg) -> Self {
        match a {
            NActInitArg::Absid => Self::AbsId,
            NActInitArg::Zero => Self::Zero,
            NActInitArg::Random => Self::Random,
        }
    }
}

impl From<LayerTypeArg> for LayerKind {
    fn from(a: LayerTypeArg) -> Self {
        match a {
            LayerTypeArg::Aol => Self::Aol,
            LayerTypeArg::Cpl => Self::Cpl,
            LayerTypeArg::Soc => Self::Soc,
        }
    }
}

/// Layer kind and activation of a network built from the arguments.
pub fn model_choice(activation: ActivationArg, layer_type: LayerTypeArg, init: NActInitArg) -> (LayerKind, ActivationChoice) {
    match activation {
        ActivationArg::Nact => (layer_type.into(), ActivationChoice::NAct(init.into())),
        ActivationArg::Maxmin => (layer_type.into(), ActivationChoice::MaxMin),
        ActivationArg::Abs => (layer_type.into(), ActivationChoice::Abs),
        ActivationArg::ReluUnconstrained => (LayerKind::Linear, ActivationChoice::Relu),
    }
}

/// `theta1` of the absolute-value channels under AbsId initialization.
pub const ABSID_THETA1: f64 = -100.0;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, Args)]
pub struct ToyOptions {
    #[arg(long, value_enum, default_value = "nact")]
    pub activation: ActivationArg,
    #[arg(long, value_enum, default_value = "absid")]
    pub nact_init: NActInitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 40)]
    pub width: usize,
    /// Number of dense layers.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    /// Factor applied to N-activation parameters during optimization.
    #[arg(long, default_value_t = 1.0)]
    pub nact_lr_scale: f64,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            activation: ActivationArg::Nact,
            nact_init: NActInitArg::Absid,
            seed: 0,
            epochs: 1000,
            lr: 0.01,
            width: 40,
            depth: 3,
            samples: 1000,
            batch_size: 100,
            nact_lr_scale: 1.0,
        }
    }
}

/// Half-width of the toy input interval.
pub const TOY_RANGE: f64 = 3.0;
/// Points in the dense sampling of the learned function.
pub const TOY_SAMPLE_POINTS: usize = 601;

/// The learned function sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionSamples {
    pub x: Vec<f64>,
    pub prediction: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub network: Network,
    pub history: History,
    pub final_mse: f64,
    pub samples: FunctionSamples,
}

/// Inputs drawn uniformly from `[-3, 3]` with N-function targets.
pub fn toy_dataset(samples: usize, rng: &mut ChaCha8Rng) -> Result<InMemoryDataset> {
    let f = CpwlFunction::n_function();
    let xs: Vec<Vec<f64>> = (0..samples).map(|_| vec![rng.random_range(-TOY_RANGE..=TOY_RANGE)]).collect();
    let ys = xs.iter().map(|x| vec![f.eval(x[0])]).collect();
    Ok(InMemoryDataset::regression(xs, ys)?)
}

/// Fits the N-function on `[-3, 3]` with MSE and Nesterov SGD.
pub fn fit_toy(opts: &ToyOptions) -> Result<ToyRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let data = toy_dataset(opts.samples, &mut rng)?;
    let (layer_kind, activation) = model_choice(opts.activation, LayerTypeArg::Aol, opts.nact_init);
    let spec = MlpSpec {
        input_dim: 1,
        width: opts.width,
        depth: opts.depth,
        output_dim: 1,
        layer_kind,
        activation,
        absid_theta1: ABSID_THETA1,
    };
    let mut network = build_mlp(&spec, &mut rng)?;
    let config = TrainConfig {
        learning_rate: opts.lr,
        momentum: 0.9,
        nesterov: true,
        schedule: Schedule::Constant,
        epochs: opts.epochs,
        batch_size: opts.batch_size,
        loss: LossKind::Mse,
        nact_init: opts.nact_init.into(),
        nact_lr_scale: opts.nact_lr_scale,
        seed: opts.seed,
        ..TrainConfig::default()
    };
    let history = Trainer::new(config).run(&mut network, &data)?;
    let final_mse = history.final_loss().unwrap_or(f64::NAN);
    let f = CpwlFunction::n_function();
    let n = TOY_SAMPLE_POINTS - 1;
    let x: Vec<f64> = (0..=n).map(|i| -TOY_RANGE + 2.0 * TOY_RANGE * i as f64 / n as f64).collect();
    let prediction = x.iter().map(|&v| network.eval_scalar(v)).collect::<lipnet_core::Result<_>>()?;
    let target = x.iter().map(|&v| f.eval(v)).collect();
    Ok(ToyRun { network, history, final_mse, samples: FunctionSamples { x, prediction, target } })
}

/// Writes `history.csv`, `function.json` and `network.json` into `out`.
pub fn run_fit_toy(opts: &ToyOptions, out: &Path) -> Result<Outcome> {
    let run = fit_toy(opts)?;
    create_dir(out)?;
    save_history(&out.join("history.csv"), &run.history)?;
    write_json(&out.join("function.json"), &run.samples)?;
    write_network(&out.join("network.json"), &run.network)?;
    Ok(Outcome {
        passed: run.final_mse.is_finite(),
        report: json!({
            "command": "fit-toy",
            "activation": opts.activation,
            "seed": opts.seed,
            "epochs": opts.epochs,
            "final_mse": run.final_mse,
        }),
    })
}

#[derive(Debug, Clone, Args)]
pub struct DataOptions {
    #[arg(long, value_enum, default_value = "moons")]
    pub dataset: DatasetArg,
    /// Directory with the CIFAR-10 binary batch files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Training points of the synthetic set.
    #[arg(long, default_value_t = 4000)]
    pub samples: usize,
    /// Test points of the synthetic set.
    #[arg(long, default_value_t = 1000)]
    pub test_samples: usize,
    /// Keep only the first N examples of each split.
    #[arg(long)]
    pub limit: Option<usize>,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self { dataset: DatasetArg::Moons, data_dir: None, samples: 4000, test_samples: 1000, limit: None }
    }
}

const TEST_SEED_SALT: u64 = 0x5eed_7e57;

/// Training and test splits.
pub struct Splits {
    pub train: InMemoryDataset,
    pub test: InMemoryDataset,
    /// Inputs are already centered.
    pub centered: bool,
}

pub fn load_splits(opts: &DataOptions, seed: u64) -> Result<Splits> {
    let (train, test, centered) = match opts.dataset {
        DatasetArg::Moons => (
            two_moons(opts.samples, MOONS_NOISE, seed)?,
            two_moons(opts.test_samples, MOONS_NOISE, seed ^ TEST_SEED_SALT)?,
            false,
        ),
        DatasetArg::Cifar10 => {
            let dir = opts.data_dir.as_ref().ok_or_else(|| Error::Usage("cifar10 needs --data-dir".into()))?;
            let c = load_cifar10(dir)?;
            (c.train, c.test, true)
        }
    };
    let cut = |d: InMemoryDataset| match opts.limit {
        Some(n) => d.truncated(n),
        None => d,
    };
    Ok(Splits { train: cut(train), test: cut(test), centered })
}

#[derive(Debug, Clone, Args)]
pub struct TrainOptions {
    #[command(flatten)]
    pub data: DataOptions,
    #[arg(long, value_enum, default_value = "nact")]
    pub activation: ActivationArg,
    #[arg(long, value_enum, default_value = "aol")]
    pub layer_type: LayerTypeArg,
    #[arg(long, value_enum, default_value = "absid")]
    pub nact_init: NActInitArg,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// Number of dense layers.
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Peak learning rate; defaults to the per-layer-type rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random flips and padded crops (CIFAR-10 only).
    #[arg(long)]
    pub augment: bool,
    /// Random pairs per Lipschitz audit after training.
    #[arg(long, default_value_t = 1000)]
    pub audit_trials: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            data: DataOptions::default(),
            activation: ActivationArg::Nact,
            layer_type: LayerTypeArg::Aol,
            nact_init: NActInitArg::Absid,
            width: 32,
            depth: 4,
            epochs: 20,
            lr: None,
            epsilon: DEFAULT_EPSILON,
            batch_size: 256,
            seed: 0,
            augment: false,
            audit_trials: 1000,
        }
    }
}

/// Tolerance of empirical Lipschitz audits.
pub const AUDIT_TOL: f64 = 1e-6;

/// Empirical Lipschitz ratios of a trained network and of its layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditSummary {
    pub constrained: bool,
    pub network: f64,
    pub worst_layer: f64,
    pub passed: bool,
}

pub fn audit_network(net: &Network, trials: usize, rng: &mut ChaCha8Rng) -> Result<AuditSummary> {
    let network = net.lipschitz_audit(trials, 10.0, rng)?;
    let mut worst_layer = 0.0f64;
    for layer in net.layers() {
        if let Layer::Dense(d) = layer {
            let r = lipschitz_audit(d.params(), trials, rng)?;
            worst_layer = worst_layer.max(r.empirical);
        }
    }
    let constrained = net.is_constrained();
    let passed = !constrained || (network <= 1.0 + AUDIT_TOL && worst_layer <= 1.0 + AUDIT_TOL);
    Ok(AuditSummary { constrained, network, worst_layer, passed })
}

pub struct TrainRun {
    pub network: Network,
    pub history: History,
    pub train_report: CertReport,
    pub test_report: CertReport,
    pub audit: AuditSummary,
}

pub fn train_config(opts: &TrainOptions) -> TrainConfig {
    let (kind, _) = model_choice(opts.activation, opts.layer_type, opts.nact_init);
    let mut config = TrainConfig::classification(kind);
    if let Some(lr) = opts.lr {
        config.learning_rate = lr;
    }
    config.epochs = opts.epochs;
    config.batch_size = opts.batch_size;
    config.epsilon = opts.epsilon;
    config.nact_init = opts.nact_init.into();
    config.absid_theta1 = ABSID_THETA1;
    config.seed = opts.seed;
    config
}

/// Builds the network described by `opts` without training it.
pub fn build_classifier(opts: &TrainOptions, input_dim: usize, classes: usize, rng: &mut ChaCha8Rng) -> Result<Network> {
    let (layer_kind, activation) = model_choice(opts.activation, opts.layer_type, opts.nact_init);
    let spec = MlpSpec {
        input_dim,
        width: opts.width,
        depth: opts.depth,
        output_dim: classes,
        layer_kind,
        activation,
        absid_theta1: ABSID_THETA1,
    };
    Ok(build_mlp(&spec, rng)?)
}

/// Trains a classifier with offset cross-entropy and certifies it on both
/// splits.
pub fn train_classifier(opts: &TrainOptions) -> Result<TrainRun> {
    let splits = load_splits(&opts.data, opts.seed)?;
    let classes = splits.train.classes().ok_or_else(|| Error::Dataset("training data has no labels".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut network = build_classifier(opts, splits.train.input_dim(), classes, &mut rng)?;
    let mut config = train_config(opts);
    config.subtract_mean = !splits.centered;
    let mut trainer = Trainer::new(config).with_eval(&splits.test);
    if opts.augment {
        if opts.data.dataset != DatasetArg::Cifar10 {
            return Err(Error::Usage("--augment applies to cifar10 only".into()));
        }
        trainer = trainer.with_augment(augment_cifar);
    }
    let history = trainer.run(&mut network, &splits.train)?;
    let train_report = certify(&network, &splits.train, SQRT_2)?;
    let test_report = certify(&network, &splits.test, SQRT_2)?;
    let audit = audit_network(&network, opts.audit_trials, &mut rng)?;
    Ok(TrainRun { network, history, train_report, test_report, audit })
}

/// Writes `checkpoint.json` and `history.csv` into `out`. Fails when the
/// trained network does not pass its Lipschitz audits.
pub fn run_train(opts: &TrainOptions, out: &Path) -> Result<Outcome> {
    let run = train_classifier(opts)?;
    create_dir(out)?;
    write_network(&out.join("checkpoint.json"), &run.network)?;
    save_history(&out.join("history.csv"), &run.history)?;
    Ok(Outcome {
        passed: run.audit.passed,
        report: json!({
            "command": "train",
            "dataset": opts.data.dataset,
            "activation": opts.activation,
            "layer_type": opts.layer_type,
            "nact_init": opts.nact_init,
            "seed": opts.seed,
            "final_loss": run.history.final_loss(),
            "train_accuracy": run.train_report.accuracy,
            "test_accuracy": run.test_report.accuracy,
            "test_cra": run.test_report.cra,
            "audit": run.audit,
        }),
    })
}

#[derive(Debug, Clone, Args)]
pub struct CertifyOptions {
    /// Network checkpoint.
    #[arg(long)]
    pub net: PathBuf,
    #[command(flatten)]
    pub data: DataOptions,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Seed the synthetic data was generated with.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Score-margin divisor of the certified radius.
    #[arg(long, default_value_t = SQRT_2)]
    pub factor: f64,
    /// Random perturbations of norm 0.999 r applied to each certified
    /// example; any changed prediction fails the command.
    #[arg(long, default_value_t = 0)]
    pub perturbations: usize,
}

/// Shrink factor applied to the certified radius by perturbation checks.
pub const PERTURBATION_SHRINK: f64 = 0.999;

pub fn run_certify(opts: &CertifyOptions, out: &Path) -> Result<Outcome> {
    let net = read_network(&opts.net)?;
    let splits = load_splits(&opts.data, opts.seed)?;
    let data = match opts.split {
        SplitArg::Train => &splits.train,
        SplitArg::Test => &splits.test,
    };
    if data.input_dim() != net.input_dim() || data.classes() != Some(net.output_dim()) {
        return Err(Error::Checkpoint(format!(
            "network maps {} -> {} but the data has {} features and {:?} classes",
            net.input_dim(),
            net.output_dim(),
            data.input_dim(),
            data.classes()
        )));
    }
    let report = certify(&net, data, opts.factor)?;
    save_cert_report(out, &report)?;
    let check = if opts.perturbations > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        Some(perturbation_check(&net, data, opts.perturbations, PERTURBATION_SHRINK, &mut rng)?)
    } else {
        None
    };
    Ok(Outcome {
        passed: check.is_none_or(|c: PerturbationCheck| c.violations == 0),
        report: json!({
            "command": "certify",
            "examples": report.examples.len(),
            "accuracy": report.accuracy,
            "cra": report.cra,
            "perturbation_check": check.map(|c| json!({
                "certified": c.certified,
                "perturbations": c.perturbations,
                "violations": c.violations,
            })),
        }),
    })
}

/// Error tolerance of `compile` and the default of `verify`.
pub const COMPILE_TOL: f64 = 1e-9;

fn compile_report_json(r: &CompileReport, tol: f64) -> Value {
    json!({
        "k": r.k,
        "linear_layer_count": r.linear_layer_count,
        "n_act_count": r.n_act_count,
        "abs_act_count": r.abs_act_count,
        "max_abs_error": r.max_abs_error,
        "max_spot_rel_error": r.max_spot_rel_error,
        "probe_count": r.probe_count,
        "max_layer_norm": r.max_layer_norm,
        "linear_layer_bound": compiler::linear_layer_bound(r.k),
        "activation_bound": compiler::activation_bound(r.k),
        "within_size_bounds": r.within_size_bounds(),
        "layers_nonexpansive": r.layers_nonexpansive(),
        "tolerance": tol,
        "passed": r.passes(tol),
    })
}

fn interval(lo: Option<f64>, hi: Option<f64>) -> Result<Option<(f64, f64)>> {
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok(Some((lo, hi))),
        (None, None) => Ok(None),
        _ => Err(Error::Usage("--lo and --hi go together".into())),
    }
}

/// Compiles `f` on `[lo, hi]` when given, else on the whole line, and
/// verifies the result.
pub fn compile_and_verify(f: &CpwlFunction, range: Option<(f64, f64)>) -> Result<(Network, CompileReport)> {
    Ok(match range {
        Some((lo, hi)) => {
            let net = compiler::compile_bounded(f, lo, hi)?;
            let report = compiler::verify_compiled(&net, f, lo, hi)?;
            (net, report)
        }
        None => {
            let net = compiler::compile(f)?;
            let report = compiler::verify_unbounded(&net, f)?;
            (net, report)
        }
    })
}

#[derive(Debug, Clone, Args)]
pub struct CompileOptions {
    /// Function spec JSON.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Network JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Compile for inputs in [lo, hi] only.
    #[arg(long, allow_negative_numbers = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub hi: Option<f64>,
}

pub fn run_compile(opts: &CompileOptions) -> Result<Outcome> {
    let range = interval(opts.lo, opts.hi)?;
    let f = read_function(&opts.input)?;
    let (net, report) = compile_and_verify(&f, range)?;
    write_network(&opts.out, &net)?;
    let mut json = compile_report_json(&report, COMPILE_TOL);
    json["command"] = "compile".into();
    Ok(Outcome { passed: report.passes(COMPILE_TOL), report: json })
}

#[derive(Debug, Clone, Args)]
pub struct VerifyOptions {
    /// Network JSON.
    #[arg(long)]
    pub net: PathBuf,
    /// Function spec JSON.
    #[arg(long = "fn")]
    pub function: PathBuf,
    /// Verify on [lo, hi] only; without both, the whole line is checked.
    #[arg(long, allow_negative_numbers = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub hi: Option<f64>,
    #[arg(long, default_value_t = COMPILE_TOL)]
    pub tol: f64,
}

pub fn run_verify(opts: &VerifyOptions) -> Result<Outcome> {
    let range = interval(opts.lo, opts.hi)?;
    let f = read_function(&opts.function)?;
    let net = read_network(&opts.net)?;
    let report = match range {
        Some((lo, hi)) => compiler::verify_compiled(&net, &f, lo, hi)?,
        None => compiler::verify_unbounded(&net, &f)?,
    };
    let mut json = compile_report_json(&report, opts.tol);
    json["command"] = "verify".into();
    Ok(Outcome { passed: report.passes(opts.tol), report: json })
}

#[derive(Debug, Clone, Args)]
pub struct AuditOptions {
    /// Audit this checkpoint instead of a freshly initialized network.
    #[arg(long)]
    pub net: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "aol")]
    pub layer_type: LayerTypeArg,
    #[arg(long, value_enum, default_value = "nact")]
    pub activation: ActivationArg,
    #[arg(long, value_enum, default_value = "absid")]
    pub nact_init: NActInitArg,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 8)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allowed excess of spectral-norm bounds over 1.
    #[arg(long, default_value_t = 1e-9)]
    pub spectral_tol: f64,
    /// Allowed excess of empirical ratios over 1.
    #[arg(long, default_value_t = AUDIT_TOL)]
    pub empirical_tol: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            net: None,
            layer_type: LayerTypeArg::Aol,
            activation: ActivationArg::Nact,
            nact_init: NActInitArg::Absid,
            width: 16,
            depth: 3,
            input_dim: 8,
            trials: 1000,
            seed: 0,
            spectral_tol: 1e-9,
            empirical_tol: AUDIT_TOL,
        }
    }
}

fn fresh_network(
    activation: ActivationArg,
    layer_type: LayerTypeArg,
    nact_init: NActInitArg,
    dims: (usize, usize, usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<Network> {
    let (input_dim, width, depth, output_dim) = dims;
    let (layer_kind, activation) = model_choice(activation, layer_type, nact_init);
    let spec = MlpSpec { input_dim, width, depth, output_dim, layer_kind, activation, absid_theta1: ABSID_THETA1 };
    Ok(build_mlp(&spec, rng)?)
}

pub fn run_audit(opts: &AuditOptions) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let net = match &opts.net {
        Some(path) => read_network(path)?,
        None => fresh_network(
            opts.activation,
            opts.layer_type,
            opts.nact_init,
            (opts.input_dim, opts.width, opts.depth, opts.input_dim),
            &mut rng,
        )?,
    };
    let mut layers = Vec::new();
    let mut spectral_max = 0.0f64;
    let mut empirical_max = 0.0f64;
    for (i, layer) in net.layers().iter().enumerate() {
        let Layer::Dense(d) = layer else { continue };
        let r = lipschitz_audit(d.params(), opts.trials, &mut rng)?;
        empirical_max = empirical_max.max(r.empirical);
        if let Some(s) = r.spectral {
            spectral_max = spectral_max.max(s);
        }
        layers.push(json!({"index": i, "kind": d.kind().name(), "empirical": r.empirical, "spectral": r.spectral}));
    }
    let network = net.lipschitz_audit(opts.trials, 10.0, &mut rng)?;
    let constrained = net.is_constrained();
    let passed = !constrained
        || (spectral_max <= 1.0 + opts.spectral_tol
            && empirical_max <= 1.0 + opts.empirical_tol
            && network <= 1.0 + opts.empirical_tol);
    Ok(Outcome {
        passed,
        report: json!({
            "command": "audit",
            "constrained": constrained,
            "network_empirical": network,
            "layer_empirical_max": empirical_max,
            "layer_spectral_max": spectral_max,
            "layers": layers,
            "passed": passed,
        }),
    })
}

#[derive(Debug, Clone, Args)]
pub struct GradCheckOptions {
    #[arg(long, value_enum, default_value = "aol")]
    pub layer_type: LayerTypeArg,
    #[arg(long, value_enum, default_value = "nact")]
    pub activation: ActivationArg,
    #[arg(long, value_enum, default_value = "random")]
    pub nact_init: NActInitArg,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 4)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub output_dim: usize,
    /// Input points to check at.
    #[arg(long, default_value_t = 5)]
    pub points: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            layer_type: LayerTypeArg::Aol,
            activation: ActivationArg::Nact,
            nact_init: NActInitArg::Random,
            width: 8,
            depth: 3,
            input_dim: 4,
            output_dim: 3,
            points: 5,
            h: 1e-6,
            tol: 1e-5,
            seed: 0,
        }
    }
}

pub fn run_grad_check(opts: &GradCheckOptions) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let net = fresh_network(
        opts.activation,
        opts.layer_type,
        opts.nact_init,
        (opts.input_dim, opts.width, opts.depth, opts.output_dim),
        &mut rng,
    )?;
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for _ in 0..opts.points {
        let x: Vec<f64> = (0..opts.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = grad_check(&net, &x, opts.h)?;
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
    }
    let passed = worst <= opts.tol && checked > 0;
    Ok(Outcome {
        passed,
        report: json!({
            "command": "grad-check",
            "max_rel_error": worst,
            "checked": checked,
            "skipped": skipped,
            "tolerance": opts.tol,
            "passed": passed,
        }),
    })
}
