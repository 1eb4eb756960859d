//! Adapted (bi-causal) Wasserstein distances between laws of one-dimensional
//! SDEs, computed three independent ways: exact dynamic programming on
//! quantized monotone Euler–Maruyama lattices, the Knothe–Rosenblatt
//! rearrangement of those lattices, and Monte Carlo simulation of the
//! synchronous coupling.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

pub mod error;
pub mod model;
pub mod noise;
pub mod sde;
pub mod lattice;
pub mod transport;
pub mod estimate;
pub mod acceptance;

pub use error::{Error, Result};
