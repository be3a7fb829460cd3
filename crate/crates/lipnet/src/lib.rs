//! File formats, datasets, experiment runners and the `lipnet` command-line
//! tool built on [`lipnet_core`].
//!
//! - [`formats`]: function-spec and network-checkpoint JSON.
//! - [`data`]: the CIFAR-10 binary loader with augmentation and a synthetic
//!   two-moons set.
//! - [`report`]: history and certification CSV files.
//! - [`experiments`]: the toy fit, classifier training, certification,
//!   compilation, audits and gradient checks.

pub mod data;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod report;

pub use error::{Error, Result};
