//! Controller synthesis from data by semidefinite programming.
//!
//! Every program shares the change of variables G1 = Y1 P1^-1 with
//! Z0 [G1 G2] = I, so that K = U0 [G1 G2] and the closed loop reads
//! x+ = M x + N Q(x) with M = X1 G1 and N = X1 G2.

pub mod program;
mod programs;
mod result;
pub mod solver;

pub use program::{AffineMat, ConicProgram, LinExpr, MatVar, MatrixNorm};
pub use programs::{
    petersen_affine, petersen_block, strict_margin, synth_ct, synth_exact, synth_extended,
    synth_min_norm, synth_normal_form, synth_robust, synth_sparse, verify_given_k, SynthOptions,
    EPSILON_FLOOR, K1_MARGIN, STABILITY_MARGIN,
};
pub use result::{
    ProbabilityClaim, ResidualReport, RobustParams, SolverStats, StabilityClaim, SynthMode,
    SynthesisResult,
};
pub use solver::{solve, Solution, SolveStatus, SolverOptions};
