//! Ground-truth plants, experiment generation and closed-loop simulation.
//!
//! Nothing in here is visible to the synthesis code: controllers are
//! designed from recorded data only, and the models serve to generate that
//! data and to check the designs afterwards.

pub mod catalog;
mod closed_loop;
mod experiment;
mod model;

pub use closed_loop::{
    simulate_closed_loop, ClosedLoopRun, Controller, Verdict, CONVERGENCE_DWELL, CONVERGENCE_EPS,
};
pub use experiment::{
    excitation, harness_residual, repetition_seed, simulate, simulate_repeated, simulate_with,
    DisturbanceSampler, ExperimentConfig, DIVERGENCE_NORM,
};
pub use model::{DisturbanceSpec, SystemModel, TimeMode};

use crate::basis::DataMatrices;
use crate::error::Result;

/// Entrywise mean of repeated experiments.
pub fn average_datasets(sets: &[DataMatrices]) -> Result<DataMatrices> {
    DataMatrices::average(sets)
}
