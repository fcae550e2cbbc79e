//! Built-in plants used by the demos and tests.

use nalgebra::DMatrix;

use super::model::{DisturbanceSpec, SystemModel, TimeMode};
use crate::basis::{BasisFunction, BasisLibrary};
use crate::error::{Error, Result};

/// Pendulum constants: sampling time, mass, length, gravity, friction.
pub const TS: f64 = 0.1;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const GRAVITY: f64 = 9.8;
pub const FRICTION: f64 = 0.01;

pub const NAMES: &[&str] = &[
    "pendulum",
    "pendulum-noisy",
    "pendulum-ct",
    "pendulum-base",
    "pendulum-linear",
    "cubic",
    "cubic-square",
    "output-poly",
];

fn mono(e: &[u32]) -> BasisFunction {
    BasisFunction::monomial(e)
}

fn rows(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

fn pendulum_lib() -> BasisLibrary {
    BasisLibrary::new(2, 0, vec![BasisFunction::Sine { index: 0 }]).expect("static dictionary")
}

fn pendulum_a() -> DMatrix<f64> {
    let inertia = MASS * LENGTH * LENGTH;
    rows(
        2,
        3,
        &[
            1.0,
            TS,
            0.0,
            0.0,
            1.0 - TS * FRICTION / inertia,
            TS * GRAVITY / LENGTH,
        ],
    )
}

fn pendulum_b() -> DMatrix<f64> {
    rows(2, 1, &[0.0, TS / (MASS * LENGTH * LENGTH)])
}

/// Look up a model by name.
pub fn model(name: &str) -> Result<SystemModel> {
    let inertia = MASS * LENGTH * LENGTH;
    let no_e = |n: usize| DMatrix::zeros(n, 0);
    let m = match name {
        "pendulum" => SystemModel::new(
            name,
            pendulum_a(),
            pendulum_b(),
            no_e(2),
            pendulum_lib(),
            TimeMode::Discrete,
        )?,
        "pendulum-noisy" => SystemModel::new(
            name,
            pendulum_a(),
            pendulum_b(),
            rows(2, 1, &[0.0, 1.0]),
            pendulum_lib(),
            TimeMode::Discrete,
        )?,
        "pendulum-ct" => SystemModel::new(
            name,
            rows(
                2,
                3,
                &[0.0, 1.0, 0.0, 0.0, -FRICTION / inertia, GRAVITY / LENGTH],
            ),
            rows(2, 1, &[0.0, 1.0 / inertia]),
            no_e(2),
            pendulum_lib(),
            TimeMode::Continuous,
        )?,
        "pendulum-base" => {
            // Force applied at the base: the input field is cos(x1) / (m l).
            let lib = BasisLibrary::new(
                2,
                1,
                vec![
                    BasisFunction::Sine { index: 0 },
                    BasisFunction::ScaledProduct {
                        coefficient: 1.0,
                        factors: vec![BasisFunction::Cosine { index: 0 }, mono(&[0, 0, 1])],
                    },
                ],
            )?;
            let a = rows(
                2,
                5,
                &[
                    1.0,
                    TS,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    1.0 - TS * FRICTION / inertia,
                    0.0,
                    TS * GRAVITY / LENGTH,
                    TS / (MASS * LENGTH),
                ],
            );
            SystemModel::new(
                name,
                a,
                DMatrix::zeros(2, 1),
                no_e(2),
                lib,
                TimeMode::Discrete,
            )?
        }
        "pendulum-linear" => {
            // Linearized pendulum; the sine remainder enters as a disturbance.
            let a = rows(
                2,
                2,
                &[
                    1.0,
                    TS,
                    TS * GRAVITY / LENGTH,
                    1.0 - TS * FRICTION / inertia,
                ],
            );
            SystemModel::new(
                name,
                a,
                pendulum_b(),
                rows(2, 1, &[0.0, 1.0]),
                BasisLibrary::linear(2)?,
                TimeMode::Discrete,
            )?
        }
        "cubic" => {
            let lib = BasisLibrary::new(2, 0, vec![mono(&[3, 0])])?;
            let a = rows(2, 3, &[0.0, 1.0, 1.0, 0.5, 0.0, 0.0]);
            SystemModel::new(
                name,
                a,
                rows(2, 1, &[1.0, 0.0]),
                no_e(2),
                lib,
                TimeMode::Discrete,
            )?
        }
        "cubic-square" => {
            let lib = BasisLibrary::new(2, 0, vec![mono(&[0, 2]), mono(&[3, 0])])?;
            let a = rows(2, 4, &[0.0, 1.0, 0.0, 1.0, 0.5, 0.0, 0.2, 0.0]);
            SystemModel::new(
                name,
                a,
                rows(2, 1, &[1.0, 0.0]),
                DMatrix::identity(2, 2),
                lib,
                TimeMode::Discrete,
            )?
        }
        "output-poly" => {
            let lib = BasisLibrary::new(2, 0, vec![mono(&[0, 2]), mono(&[3, 0])])?;
            let a = rows(2, 4, &[0.0, 0.0, 1.0, 1.0, 0.5, 0.0, 0.2, 0.0]);
            SystemModel::new(
                name,
                a,
                rows(2, 1, &[1.0, 0.0]),
                no_e(2),
                lib,
                TimeMode::Discrete,
            )?
            .with_output(1)?
        }
        other => {
            return Err(Error::input(format!(
                "unknown model {other:?}; available: {}",
                NAMES.join(", ")
            )))
        }
    };
    Ok(m)
}

/// Disturbance law that turns `pendulum-linear` back into the true pendulum:
/// d(x) = (Ts g / l) (sin x1 - x1).
pub fn neglected_sine() -> DisturbanceSpec {
    DisturbanceSpec::StateDependent {
        functions: vec![BasisFunction::ScaledProduct {
            coefficient: TS * GRAVITY / LENGTH,
            factors: vec![BasisFunction::SineRemainder { index: 0 }],
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn all_names_build() {
        for n in NAMES {
            model(n).unwrap();
        }
        assert!(model("nope").is_err());
    }

    #[test]
    fn linear_plus_neglected_equals_pendulum() {
        let lin = model("pendulum-linear").unwrap();
        let full = model("pendulum").unwrap();
        let DisturbanceSpec::StateDependent { functions } = neglected_sine() else {
            unreachable!()
        };
        let x = DVector::from_vec(vec![0.7, -0.3]);
        let u = DVector::from_vec(vec![0.2]);
        let d = DVector::from_vec(vec![functions[0].eval(x.as_slice())]);
        let a = lin.step(&x, &u, &d, 0.0);
        let b = full.step(&x, &u, &DVector::zeros(0), 0.0);
        assert!((a - b).abs().max() < 1e-15);
    }

    #[test]
    fn base_forced_pendulum_uses_cosine_field() {
        let m = model("pendulum-base").unwrap();
        let x = DVector::from_vec(vec![0.5, 0.1]);
        let u = DVector::from_vec(vec![2.0]);
        let next = m.step(&x, &u, &DVector::zeros(0), 0.0);
        let expect =
            TS * GRAVITY * 0.5f64.sin() + (1.0 - TS * FRICTION) * 0.1 + TS * 0.5f64.cos() * 2.0;
        assert!((next[1] - expect).abs() < 1e-14);
    }
}
