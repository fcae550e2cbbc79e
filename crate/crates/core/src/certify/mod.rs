//! Lyapunov decrement bounds evaluated from synthesis data, grid estimates
//! of attraction and invariance regions, and probability bounds for
//! averaged experiments.
//!
//! Regions are sublevel sets {x : x' P1^-1 x <= gamma}. Each certificate
//! checks its defining inequality at the points of a grid only, so it is an
//! estimate rather than a proof between grid points.

mod decrement;
mod grid;
mod probability;
mod region;

pub use decrement::{DecrementModel, DisturbanceBound, NoisyTerms, QuadLyapunov, Variant};
pub use grid::{GridSpec, DEFAULT_HALF_WIDTH, DEFAULT_POINTS, MAX_GRID_POINTS};
pub use probability::{
    prob_bound_bounded, prob_bound_gaussian, stability_probability, ProbabilityBound,
};
pub use region::{
    certify_pi_neglected, certify_rpi, estimate_roa, ContainmentRecord, PointValue, RegionEstimate,
    RegionKind, BISECTION_MAX_ITER, BISECTION_REL_TOL, ESTIMATE_NOTE,
};
