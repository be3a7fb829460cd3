//! Building blocks for 1-Lipschitz neural networks with N-activations.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! core:
//!
//! - [`pwl`]: exact 1-Lipschitz continuous piecewise-linear scalar functions,
//!   used as the compiler input and as the testing oracle.
//! - [`activations`]: the N-activation, MaxMin, absolute value and ReLU with
//!   their sub-gradients.
//! - [`layers`]: dense AOL, CPL and SOC layers, power iteration and Lipschitz
//!   audits.
//! - [`compiler`]: translation of any 1-CPWL function into an exact width-2
//!   network of norm-bounded linear layers and N-activations, plus a verifier.
//! - [`nn`]: the network container, reverse-mode gradients, Nesterov SGD,
//!   losses, initialization strategies and margin certification.
//!
//! File formats, data loaders and the command-line tool live in the `lipnet`
//! crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod activations;
pub mod compiler;
pub mod error;
pub mod layers;
pub mod linalg;
pub mod nn;
pub mod pwl;

pub use error::{Error, Result};
