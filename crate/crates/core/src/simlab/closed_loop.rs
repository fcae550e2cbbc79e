use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::experiment::{DisturbanceSampler, DIVERGENCE_NORM};
use super::model::{DisturbanceSpec, SystemModel};
use crate::basis::{BasisLibrary, Trajectory};
use crate::error::{Error, Result};

pub const CONVERGENCE_EPS: f64 = 1e-6;
pub const CONVERGENCE_DWELL: usize = 10;

/// Feedback law applied in closed-loop simulation.
#[derive(Clone, Debug, PartialEq)]
pub enum Controller {
    /// u = K Z(x)
    Static {
        gain: DMatrix<f64>,
        library: BasisLibrary,
    },
    /// u+ = K Z(x, u), the input being an extra controller state.
    Dynamic {
        gain: DMatrix<f64>,
        library: BasisLibrary,
        initial_input: DVector<f64>,
    },
    /// u = K [w(x); Q(x)] with w the output coordinates of the plant.
    NormalForm {
        gain: DMatrix<f64>,
        library: BasisLibrary,
    },
}

impl Controller {
    pub fn gain(&self) -> &DMatrix<f64> {
        match self {
            Controller::Static { gain, .. }
            | Controller::Dynamic { gain, .. }
            | Controller::NormalForm { gain, .. } => gain,
        }
    }

    fn check(&self, model: &SystemModel) -> Result<()> {
        let (gain, lib) = match self {
            Controller::Static { gain, library }
            | Controller::Dynamic { gain, library, .. }
            | Controller::NormalForm { gain, library } => (gain, library),
        };
        if gain.ncols() != lib.dim() {
            return Err(Error::input(format!(
                "gain has {} columns, controller dictionary has {}",
                gain.ncols(),
                lib.dim()
            )));
        }
        if gain.nrows() != model.input_dim() {
            return Err(Error::input("gain rows must equal the number of inputs"));
        }
        let n = model.state_dim();
        let coords_ok = match self {
            Controller::Static { .. } | Controller::NormalForm { .. } => lib.coord_dim() == n,
            Controller::Dynamic { initial_input, .. } => {
                lib.coord_dim() == n + model.input_dim() && initial_input.len() == model.input_dim()
            }
        };
        if !coords_ok {
            return Err(Error::input(
                "controller dictionary does not match the plant",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// |x| < eps from `step` to the end, for at least the dwell length.
    Converged {
        step: usize,
    },
    Diverged {
        step: usize,
    },
    Bounded,
}

impl Verdict {
    pub fn converged(&self) -> bool {
        matches!(self, Verdict::Converged { .. })
    }

    pub fn diverged(&self) -> bool {
        matches!(self, Verdict::Diverged { .. })
    }
}

#[derive(Clone, Debug)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    pub verdict: Verdict,
}

/// Simulate `steps` sampling periods of the closed loop. Continuous-time
/// plants are integrated with RK4 under a zero-order hold of length `dt`.
pub fn simulate_closed_loop(
    model: &SystemModel,
    controller: &Controller,
    x0: &DVector<f64>,
    steps: usize,
    disturbance: &DisturbanceSpec,
    seed: u64,
    dt: f64,
) -> Result<ClosedLoopRun> {
    controller.check(model)?;
    let n = model.state_dim();
    if x0.len() != n {
        return Err(Error::input("initial state dimension mismatch"));
    }
    let m = model.input_dim();
    let s = model.disturbance_dim();
    let mut sampler = DisturbanceSampler::new(disturbance, s, seed)?;

    let mut states = vec![x0.clone()];
    let mut inputs: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut x = x0.clone();
    let mut u_dyn = match controller {
        Controller::Dynamic { initial_input, .. } => Some(initial_input.clone()),
        _ => None,
    };
    let mut diverged_at = None;
    for k in 0..steps {
        let u = match controller {
            Controller::Static { gain, library } => gain * library.eval_unchecked(x.as_slice()),
            Controller::NormalForm { gain, library } => {
                let w = model.output_coordinates(&x)?;
                let z: Vec<f64> = w
                    .iter()
                    .copied()
                    .chain(library.eval_nonlinear(x.as_slice()).iter().copied())
                    .collect();
                gain * DVector::from_vec(z)
            }
            Controller::Dynamic { gain, library, .. } => {
                let u = u_dyn.clone().unwrap();
                let p: Vec<f64> = x.iter().chain(u.iter()).copied().collect();
                u_dyn = Some(gain * library.eval_unchecked(&p));
                u
            }
        };
        let d = if s > 0 {
            sampler.sample(&x)
        } else {
            DVector::zeros(0)
        };
        x = model.step(&x, &u, &d, dt);
        inputs.push(u);
        states.push(x.clone());
        let norm = x.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            diverged_at = Some(k + 1);
            break;
        }
    }

    let verdict = match diverged_at {
        Some(step) => Verdict::Diverged { step },
        None => {
            let small = states
                .iter()
                .rev()
                .take_while(|x| x.norm() < CONVERGENCE_EPS)
                .count();
            if small >= CONVERGENCE_DWELL {
                Verdict::Converged {
                    step: states.len() - small,
                }
            } else {
                Verdict::Bounded
            }
        }
    };

    let t = inputs.len();
    let state_mat = DMatrix::from_fn(n, t + 1, |i, k| {
        let v = states[k][i];
        if v.is_finite() {
            v
        } else {
            f64::MAX
        }
    });
    let input_mat = DMatrix::from_fn(m, t, |i, k| inputs[k][i]);
    let trajectory = Trajectory {
        states: state_mat,
        inputs: input_mat,
        derivatives: None,
        disturbances: None,
        outputs: None,
    };
    Ok(ClosedLoopRun {
        trajectory,
        verdict,
    })
}
