//! Simulation of budget-constrained label-flipping availability attacks on
//! binary and multinomial logistic regression trained with mean-aggregated
//! mini-batch SGD.
//!
//! - [`model`]: losses, gradients, SGD and evaluation.
//! - [`attack`]: attack direction, greedy flip selection and the exhaustive
//!   reference search.
//! - [`sim`]: the per-epoch poisoned training loop.
//! - [`data`]: MNIST IDX / CIFAR-10 loaders and a synthetic generator.
//! - [`runner`]: seeded sweeps, summary metrics and result files.

pub mod attack;
pub mod data;
pub mod error;
pub mod model;
pub mod runner;
pub mod sim;

pub use error::{Error, Result};
