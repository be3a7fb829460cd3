//! Networks, reverse-mode gradients, training and certification.
//!
//! A [`Network`] is a sequence of dense layers and activation stages.
//! [`Network::forward`] returns a [`Tape`] that [`Network::backward`] (or the
//! batched [`Network::accumulate`] / [`Network::finish`] pair) consumes.
//! Training is plain mini-batch SGD with Nesterov momentum; see [`Trainer`].
//!
//! N-activation parameters are optimized in rescaled units
//! `phi = theta / nact_scale`, so their gradients and updates are smaller by
//! that factor than those of the raw `theta`.

mod certify;
mod gradcheck;
mod init;
mod loss;
mod network;
mod optim;
mod train;

pub use certify::{
    certified_radius, certified_radius_with, certify, perturbation_check, CertExample, CertReport,
    PerturbationCheck, CRA_EPSILONS, DEFAULT_MARGIN_FACTOR,
};
pub use gradcheck::{grad_check, reference_gradients, GradCheckReport, ParamRef, REL_ERROR_FLOOR};
pub use init::{
    alternating_abs_identity, build_mlp, init_dense, init_nact, with_alternating_abs_identity, ActivationChoice,
    MlpSpec, NActInit,
};
pub use loss::{argmax, mse_loss, offset_ce_loss};
pub use network::{GradAccumulator, Gradients, Layer, LayerGrad, Network, Tape, NACT_LR_SCALE};
pub use optim::{
    default_learning_rate, schedule_rate, LossKind, Schedule, Sgd, TrainConfig, DEFAULT_EPSILON, WARMUP_FRACTION,
};
pub use train::{train, Dataset, EpochRecord, History, InMemoryDataset, Target, Trainer};
