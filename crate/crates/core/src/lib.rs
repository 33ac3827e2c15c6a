//! Spectral Galerkin toolkit for stochastic PDEs on the one-dimensional torus.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod burgers;
pub mod cli;
pub mod error;
pub mod integrators;
pub mod models;
pub mod noise;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
