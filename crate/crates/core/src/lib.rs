//! Core library for dynamic conditional correlation (DCC) GARCH processes.
//!
//! The crate splits into five modules:
//!
//! * [`matrix`]: small dense linear algebra (half-vectorization calculus,
//!   Kronecker products, norms, spectral radii, SPD square roots).
//! * [`model`]: the DCC parameterization, validation and structure
//!   detection (general / diagonal / scalar).
//! * [`chain`]: the order-one Markov representation of the process, i.e.
//!   state packing and the random affine transition together with its
//!   deterministic companion matrices.
//! * [`stationarity`]: sufficient conditions for existence and uniqueness
//!   of strictly stationary solutions, bound processes, and Monte Carlo
//!   top-Lyapunov-exponent estimation.
//! * [`simulate`]: trajectory generation with pluggable innovations,
//!   explosion detection and moment diagnostics.

pub mod chain;
pub mod error;
pub mod innovations;
pub mod matrix;
pub mod model;
pub mod simulate;
pub mod stationarity;

pub use error::{Error, Result};
