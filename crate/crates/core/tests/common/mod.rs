#![allow(dead_code)]

use ddnc_core::basis::{
    monomials_up_to_degree, BasisFunction, BasisLibrary, DataMatrices, DataMode,
};
use ddnc_core::certify::{GridSpec, QuadLyapunov};
use ddnc_core::simlab::{
    catalog, simulate, simulate_closed_loop, Controller, DisturbanceSpec, ExperimentConfig,
};
use ddnc_core::synth::{synth_robust, RobustParams, SynthOptions, SynthesisResult};
use ddnc_core::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn config(horizon: usize, range: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        horizon,
        input_range: [-range, range],
        initial_range: [-range, range],
        seed,
        ..Default::default()
    }
}

pub fn data(
    model: &str,
    lib: &BasisLibrary,
    cfg: &ExperimentConfig,
    dist: &DisturbanceSpec,
) -> Result<DataMatrices> {
    let m = catalog::model(model)?;
    let traj = simulate(&m, dist, cfg)?;
    DataMatrices::build(&traj, lib, DataMode::Discrete)
}

/// Z = (x1, x2, sin x1 - x1).
pub fn remainder_lib() -> BasisLibrary {
    BasisLibrary::new(2, 0, vec![BasisFunction::SineRemainder { index: 0 }]).unwrap()
}

pub fn cubic_lib() -> BasisLibrary {
    monomials_up_to_degree(2, 3).unwrap()
}

/// Controller u = -x2 - x1^3 for the cubic-square plant.
pub fn simple_polynomial_gain() -> DMatrix<f64> {
    let mut k = DMatrix::zeros(1, 9);
    k[(0, 1)] = -1.0;
    k[(0, 5)] = -1.0;
    k
}

pub fn pendulum_grid() -> GridSpec {
    GridSpec {
        lower: vec![-3.0, -6.0],
        upper: vec![3.0, 6.0],
        points: vec![201, 201],
    }
}

/// Robust design with the pendulum settings: T = 30, inputs in [-0.5, 0.5],
/// Omega = I, Delta = delta sqrt(T), both regularization weights 0.1.
pub fn pendulum_robust(delta: f64, seed: u64) -> Result<(SynthesisResult, DataMatrices)> {
    let m = catalog::model("pendulum-noisy")?;
    let lib = remainder_lib();
    let traj = simulate(
        &m,
        &DisturbanceSpec::Uniform { delta },
        &config(30, 0.5, seed),
    )?;
    let d = DataMatrices::build(&traj, &lib, DataMode::Discrete)?;
    let mut params = RobustParams::from_pointwise_bound(delta, 30, 1, DMatrix::identity(2, 2));
    params.lambda_p = 0.1;
    params.lambda_g = 0.1;
    params.e = Some(m.e.clone());
    Ok((synth_robust(&d, &params, &SynthOptions::default())?, d))
}

/// Uniform sample from the ellipsoid {x' Pinv x <= gamma}.
pub fn sample_in_sublevel<R: Rng>(lyap: &QuadLyapunov, gamma: f64, rng: &mut R) -> DVector<f64> {
    let n = lyap.dim();
    let chol = lyap.pinv().clone().cholesky().expect("positive definite");
    let u = loop {
        let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if u.norm() <= 1.0 {
            break u;
        }
    };
    // Pinv = L L', so x = sqrt(gamma) L'^-1 u gives V(x) = gamma |u|^2.
    let lt = chol.l().transpose();
    lt.solve_upper_triangular(&u).unwrap() * gamma.sqrt()
}

/// Largest V along a closed-loop rollout, and whether it converged.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    plant: &str,
    gain: &DMatrix<f64>,
    lib: &BasisLibrary,
    lyap: &QuadLyapunov,
    x0: &DVector<f64>,
    steps: usize,
    disturbance: &DisturbanceSpec,
    seed: u64,
) -> (f64, bool, bool) {
    let m = catalog::model(plant).unwrap();
    let c = Controller::Static {
        gain: gain.clone(),
        library: lib.clone(),
    };
    let run = simulate_closed_loop(&m, &c, x0, steps, disturbance, seed, 0.1).unwrap();
    let vmax = run
        .trajectory
        .states
        .column_iter()
        .map(|x| lyap.value(x.as_slice()))
        .fold(0.0, f64::max);
    (vmax, run.verdict.converged(), run.verdict.diverged())
}
