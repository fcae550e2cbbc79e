//! Data-driven stabilization of nonlinear systems by nonlinearity cancellation.
//!
//! The crate turns a single experiment (or an average of repeated ones) into
//! a semidefinite program whose solution is a state-feedback controller
//! `u = K Z(x)`, then certifies the closed loop on a grid with quadratic
//! Lyapunov sublevel sets.

pub mod basis;
pub mod certify;
pub mod cli;
pub mod error;
pub mod linalg;
pub(crate) mod serde_mat;
pub mod simlab;
pub mod synth;

pub use error::{Error, Result};
