use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{DisturbanceSpec, SystemModel, TimeMode};
use crate::basis::Trajectory;
use crate::error::{Error, Result};
use crate::linalg;

/// States with a norm above this are treated as a blow-up.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of transitions T.
    pub horizon: usize,
    /// Each input component is drawn uniformly from this interval.
    pub input_range: [f64; 2],
    /// Each initial-state component is drawn uniformly from this interval.
    pub initial_range: [f64; 2],
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Euler step used to sample continuous-time plants.
    #[serde(default = "default_period")]
    pub sampling_period: f64,
}

fn one() -> usize {
    1
}

fn default_period() -> f64 {
    0.1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            input_range: [-0.5, 0.5],
            initial_range: [-0.5, 0.5],
            seed: 0,
            repetitions: 1,
            sampling_period: default_period(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::input("horizon must be at least 1"));
        }
        if self.repetitions == 0 {
            return Err(Error::input("repetitions must be at least 1"));
        }
        for (name, r) in [
            ("input", self.input_range),
            ("initial-state", self.initial_range),
        ] {
            if !r[0].is_finite() || !r[1].is_finite() || r[0] > r[1] {
                return Err(Error::input(format!(
                    "{name} interval is empty or not finite"
                )));
            }
        }
        if !self.sampling_period.is_finite() || self.sampling_period <= 0.0 {
            return Err(Error::input("sampling period must be positive"));
        }
        Ok(())
    }
}

/// Seed for repetition `r`, decorrelated from the base seed.
pub fn repetition_seed(seed: u64, r: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        ^ (r as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform_in(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Stateful disturbance generator.
pub struct DisturbanceSampler {
    spec: DisturbanceSpec,
    channels: usize,
    chol: Option<DMatrix<f64>>,
    rng: ChaCha8Rng,
}

impl DisturbanceSampler {
    pub fn new(spec: &DisturbanceSpec, channels: usize, seed: u64) -> Result<Self> {
        spec.validate(channels)?;
        let chol = match spec {
            DisturbanceSpec::Gaussian { covariance } => Some(linalg::sym_sqrt(covariance)),
            _ => None,
        };
        Ok(Self {
            spec: spec.clone(),
            channels,
            chol,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn sample(&mut self, x: &DVector<f64>) -> DVector<f64> {
        let s = self.channels;
        match &self.spec {
            DisturbanceSpec::None => DVector::zeros(s),
            DisturbanceSpec::Uniform { delta } => {
                let h = delta / (s.max(1) as f64).sqrt();
                DVector::from_fn(s, |_, _| {
                    if h == 0.0 {
                        0.0
                    } else {
                        self.rng.random_range(-h..=h)
                    }
                })
            }
            DisturbanceSpec::Gaussian { .. } => {
                let z = DVector::from_fn(s, |_, _| self.rng.sample::<f64, _>(StandardNormal));
                self.chol.as_ref().unwrap() * z
            }
            DisturbanceSpec::StateDependent { functions } => {
                DVector::from_iterator(s, functions.iter().map(|f| f.eval(x.as_slice())))
            }
        }
    }
}

fn check_norm(x: &DVector<f64>, step: usize) -> Result<()> {
    let norm = x.norm();
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(Error::Divergence { step, norm });
    }
    Ok(())
}

/// Draw the input sequence and the initial state for one experiment.
pub fn excitation(model: &SystemModel, config: &ExperimentConfig) -> (DVector<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = model.state_dim();
    let m = model.input_dim();
    let x0 = DVector::from_fn(n, |_, _| uniform_in(&mut rng, config.initial_range));
    let mut inputs = DMatrix::zeros(m, config.horizon);
    for k in 0..config.horizon {
        for i in 0..m {
            inputs[(i, k)] = uniform_in(&mut rng, config.input_range);
        }
    }
    (x0, inputs)
}

/// Run one open-loop experiment with the given excitation.
pub fn simulate_with(
    model: &SystemModel,
    disturbance: &DisturbanceSpec,
    x0: &DVector<f64>,
    inputs: &DMatrix<f64>,
    disturbance_seed: u64,
    sampling_period: f64,
) -> Result<Trajectory> {
    model.validate()?;
    let n = model.state_dim();
    let t = inputs.ncols();
    if x0.len() != n || inputs.nrows() != model.input_dim() {
        return Err(Error::input(
            "excitation does not match the model dimensions",
        ));
    }
    let s = model.disturbance_dim();
    let mut sampler = DisturbanceSampler::new(disturbance, s, disturbance_seed)?;
    let record_d = s > 0 && !matches!(disturbance, DisturbanceSpec::None);
    let continuous = model.time == TimeMode::Continuous;

    let mut states = DMatrix::zeros(n, t + 1);
    let mut derivs = DMatrix::zeros(n, t);
    let mut dist = DMatrix::zeros(s, t);
    let mut x = x0.clone();
    check_norm(&x, 0)?;
    states.set_column(0, &x);
    for k in 0..t {
        let u = inputs.column(k).into_owned();
        let d = if s > 0 {
            sampler.sample(&x)
        } else {
            DVector::zeros(0)
        };
        let f = model.rhs(&x, &u, &d);
        x = if continuous {
            derivs.set_column(k, &f);
            &x + f * sampling_period
        } else {
            f
        };
        check_norm(&x, k + 1)?;
        states.set_column(k + 1, &x);
        if s > 0 {
            dist.set_column(k, &d);
        }
    }

    let outputs = match model.output_index {
        Some(idx) => {
            // y(T+1..T+n-1) only depend on x(T) under the relative-degree
            // assumption, so they are generated with zero input.
            let mut y: Vec<f64> = states.row(idx).iter().copied().collect();
            let zero_u = DVector::zeros(model.input_dim());
            let zero_d = DVector::zeros(0);
            let mut cur = x.clone();
            for extra in 1..n {
                cur = model.rhs(&cur, &zero_u, &zero_d);
                check_norm(&cur, t + extra)?;
                y.push(cur[idx]);
            }
            Some(y)
        }
        None => None,
    };

    let mut traj = Trajectory::new(states, inputs.clone())?;
    traj.derivatives = continuous.then_some(derivs);
    traj.disturbances = record_d.then_some(dist);
    traj.outputs = outputs;
    Ok(traj)
}

/// One experiment; input, initial state and disturbance all derive from
/// `config.seed`.
pub fn simulate(
    model: &SystemModel,
    disturbance: &DisturbanceSpec,
    config: &ExperimentConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let (x0, inputs) = excitation(model, config);
    simulate_with(
        model,
        disturbance,
        &x0,
        &inputs,
        repetition_seed(config.seed, 0),
        config.sampling_period,
    )
}

/// `config.repetitions` experiments sharing the input pattern and initial
/// state, each with its own disturbance realization.
pub fn simulate_repeated(
    model: &SystemModel,
    disturbance: &DisturbanceSpec,
    config: &ExperimentConfig,
) -> Result<Vec<Trajectory>> {
    config.validate()?;
    let (x0, inputs) = excitation(model, config);
    (0..config.repetitions)
        .into_par_iter()
        .map(|r| {
            simulate_with(
                model,
                disturbance,
                &x0,
                &inputs,
                repetition_seed(config.seed, r),
                config.sampling_period,
            )
        })
        .collect()
}

/// Harness residual `X1 - A Z*0 - B U0 - E D0` for a recorded trajectory,
/// using the model's own dictionary.
pub fn harness_residual(model: &SystemModel, traj: &Trajectory) -> Result<f64> {
    let t = traj.len();
    let s = model.disturbance_dim();
    let mut worst: f64 = 0.0;
    for k in 0..t {
        let x = traj.states.column(k).into_owned();
        let u = traj.inputs.column(k).into_owned();
        let d = match &traj.disturbances {
            Some(d) => d.column(k).into_owned(),
            None => DVector::zeros(s),
        };
        let f = model.rhs(&x, &u, &d);
        let target = match (&traj.derivatives, model.time) {
            (Some(der), TimeMode::Continuous) => der.column(k).into_owned(),
            _ => traj.states.column(k + 1).into_owned(),
        };
        worst = worst.max((f - target).abs().max());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::catalog;

    #[test]
    fn zero_excitation_stays_at_origin() {
        let m = catalog::model("pendulum").unwrap();
        let cfg = ExperimentConfig {
            input_range: [0.0, 0.0],
            initial_range: [0.0, 0.0],
            ..Default::default()
        };
        let t = simulate(&m, &DisturbanceSpec::None, &cfg).unwrap();
        assert!(t.states.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reproducible_by_seed() {
        let m = catalog::model("pendulum-noisy").unwrap();
        let cfg = ExperimentConfig {
            horizon: 30,
            seed: 42,
            ..Default::default()
        };
        let d = DisturbanceSpec::Uniform { delta: 0.01 };
        let a = simulate(&m, &d, &cfg).unwrap();
        let b = simulate(&m, &d, &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(&m, &d, &ExperimentConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_disturbance_norm_bound() {
        let m = catalog::model("cubic-square").unwrap();
        let cfg = ExperimentConfig {
            horizon: 30,
            seed: 3,
            ..Default::default()
        };
        let delta = 0.01;
        let t = simulate(&m, &DisturbanceSpec::Uniform { delta }, &cfg).unwrap();
        let d0 = t.disturbances.as_ref().unwrap();
        for col in d0.column_iter() {
            assert!(col.norm() <= delta + 1e-15);
        }
        assert!(linalg::spectral_norm(d0) <= delta * 30f64.sqrt());
        assert!(harness_residual(&m, &t).unwrap() < 1e-12);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let m = catalog::model("cubic").unwrap();
        let cfg = ExperimentConfig {
            horizon: 20,
            initial_range: [3.0, 3.0],
            input_range: [0.0, 0.0],
            ..Default::default()
        };
        match simulate(&m, &DisturbanceSpec::None, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step > 0 && step <= 20),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn repetitions_share_inputs() {
        let m = catalog::model("pendulum-noisy").unwrap();
        let cfg = ExperimentConfig {
            horizon: 30,
            repetitions: 4,
            seed: 1,
            ..Default::default()
        };
        let reps = simulate_repeated(&m, &DisturbanceSpec::Uniform { delta: 0.01 }, &cfg).unwrap();
        assert_eq!(reps.len(), 4);
        assert!(reps.iter().all(|r| r.inputs == reps[0].inputs));
        assert_ne!(reps[0].disturbances, reps[1].disturbances);
    }

    #[test]
    fn continuous_records_exact_derivatives() {
        let m = catalog::model("pendulum-ct").unwrap();
        let cfg = ExperimentConfig {
            horizon: 10,
            seed: 5,
            sampling_period: 0.05,
            ..Default::default()
        };
        let t = simulate(&m, &DisturbanceSpec::None, &cfg).unwrap();
        assert!(t.derivatives.is_some());
        assert!(harness_residual(&m, &t).unwrap() < 1e-12);
    }
}
