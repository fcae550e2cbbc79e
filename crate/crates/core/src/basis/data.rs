use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::library::BasisLibrary;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// X1 holds successor states.
    Discrete,
    /// X1 holds derivative samples.
    Continuous,
    /// Input-augmented state with an integrator on the input.
    Extended,
    /// Output coordinates w(k) = (y(k), ..., y(k+n-1)).
    Output,
}

/// Data matrices with a uniform layout across modes.
///
/// | field | discrete / continuous | extended | output |
/// |-------|-----------------------|----------|--------|
/// | `u0`  | U0                    | V0       | U0     |
/// | `x0`  | X0                    | Xi0      | W0     |
/// | `x1`  | X1 (or derivatives)   | Xi1      | W1     |
/// | `z0`  | Z0                    | Z(Xi0)   | [W0; Q0] |
///
/// `d0` carries the applied disturbance when the data come from a simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrices {
    pub mode: DataMode,
    pub u0: DMatrix<f64>,
    pub x0: DMatrix<f64>,
    pub x1: DMatrix<f64>,
    pub z0: DMatrix<f64>,
    pub d0: Option<DMatrix<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RankStatus {
    FullRowRank,
    Deficient { rank: usize, rows: usize },
}

impl RankStatus {
    pub fn of(m: &DMatrix<f64>, rel_tol: f64) -> Self {
        let r = linalg::rank(m, rel_tol);
        if r == m.nrows() {
            RankStatus::FullRowRank
        } else {
            RankStatus::Deficient {
                rank: r,
                rows: m.nrows(),
            }
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, RankStatus::FullRowRank)
    }
}

/// Rank of Z0 (needed for the equality constraints to be solvable) and of
/// [U0; Z0] (the hypothesis of the parametrization results).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RichnessReport {
    pub z0: RankStatus,
    pub stacked: RankStatus,
}

impl DataMatrices {
    pub fn build(traj: &Trajectory, library: &BasisLibrary, mode: DataMode) -> Result<Self> {
        traj.validate()?;
        let n = traj.state_dim();
        let m = traj.input_dim();
        let t = traj.len();
        let expected_coords = if mode == DataMode::Extended { n + m } else { n };
        if library.coord_dim() != expected_coords || library.state_dim() != n {
            return Err(Error::input(format!(
                "dictionary has {} coordinates ({} state), trajectory needs {expected_coords} ({n} state)",
                library.coord_dim(),
                library.state_dim()
            )));
        }
        if t == 0 {
            return Err(Error::input("trajectory has no transitions"));
        }
        let d0 = traj.disturbances.clone();
        let states = &traj.states;
        match mode {
            DataMode::Discrete => {
                let x0 = states.columns(0, t).into_owned();
                Ok(Self {
                    mode,
                    u0: traj.inputs.clone(),
                    z0: library.eval_columns(&x0)?,
                    x1: states.columns(1, t).into_owned(),
                    x0,
                    d0,
                })
            }
            DataMode::Continuous => {
                let x1 = traj
                    .derivatives
                    .clone()
                    .ok_or_else(|| Error::input("continuous mode needs derivative samples"))?;
                let x0 = states.columns(0, t).into_owned();
                Ok(Self {
                    mode,
                    u0: traj.inputs.clone(),
                    z0: library.eval_columns(&x0)?,
                    x1,
                    x0,
                    d0,
                })
            }
            DataMode::Extended => {
                // xi(k) = (x(k), u(k)) and v(k) = u(k+1), so one column is lost.
                if t < 2 {
                    return Err(Error::input("extended mode needs at least two transitions"));
                }
                let cols = t - 1;
                let xi =
                    linalg::vstack(&[&states.columns(0, t).into_owned(), &traj.inputs.clone()]);
                let x0 = xi.columns(0, cols).into_owned();
                Ok(Self {
                    mode,
                    u0: traj.inputs.columns(1, cols).into_owned(),
                    z0: library.eval_columns(&x0)?,
                    x1: xi.columns(1, cols).into_owned(),
                    x0,
                    d0: d0.map(|d| d.columns(0, cols).into_owned()),
                })
            }
            DataMode::Output => {
                let y = traj
                    .outputs
                    .as_ref()
                    .ok_or_else(|| Error::input("output mode needs output samples"))?;
                if y.len() < n + t {
                    return Err(Error::input(format!(
                        "output mode needs y(0..={}), got {} samples",
                        n + t - 1,
                        y.len()
                    )));
                }
                let w0 = DMatrix::from_fn(n, t, |i, k| y[i + k]);
                let w1 = DMatrix::from_fn(n, t, |i, k| y[i + k + 1]);
                let xs = states.columns(0, t).into_owned();
                let mut q0 = DMatrix::zeros(library.nonlinear_dim(), t);
                for (k, col) in xs.column_iter().enumerate() {
                    let p: Vec<f64> = col.iter().copied().collect();
                    q0.set_column(k, &library.eval_nonlinear(&p));
                }
                Ok(Self {
                    mode,
                    u0: traj.inputs.clone(),
                    z0: linalg::vstack(&[&w0, &q0]),
                    x1: w1,
                    x0: w0,
                    d0,
                })
            }
        }
    }

    /// Number of data columns T.
    pub fn len(&self) -> usize {
        self.z0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of the identity block of Z.
    pub fn coord_dim(&self) -> usize {
        self.x0.nrows()
    }

    pub fn dict_dim(&self) -> usize {
        self.z0.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u0.nrows()
    }

    /// The nonlinear rows of Z0.
    pub fn q0(&self) -> DMatrix<f64> {
        let n = self.coord_dim();
        self.z0.rows(n, self.dict_dim() - n).into_owned()
    }

    pub fn richness(&self) -> RichnessReport {
        self.richness_with(RANK_TOL)
    }

    pub fn richness_with(&self, rel_tol: f64) -> RichnessReport {
        RichnessReport {
            z0: RankStatus::of(&self.z0, rel_tol),
            stacked: RankStatus::of(&linalg::vstack(&[&self.u0, &self.z0]), rel_tol),
        }
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.u0.shape() == other.u0.shape()
            && self.x0.shape() == other.x0.shape()
            && self.x1.shape() == other.x1.shape()
            && self.z0.shape() == other.z0.shape()
    }

    /// Entrywise mean of several experiments. Z0 is averaged as a matrix,
    /// not re-evaluated at the averaged states.
    pub fn average(sets: &[DataMatrices]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::input("cannot average an empty list of datasets"))?;
        if sets.iter().any(|s| !first.same_shape(s)) {
            return Err(Error::input("datasets to average differ in shape or mode"));
        }
        let k = sets.len() as f64;
        let mean = |f: fn(&DataMatrices) -> &DMatrix<f64>| {
            sets.iter()
                .skip(1)
                .fold(f(first).clone(), |acc, s| acc + f(s))
                / k
        };
        let d0 = if sets.iter().all(|s| s.d0.is_some()) {
            let d = first.d0.as_ref().unwrap();
            if sets
                .iter()
                .any(|s| s.d0.as_ref().unwrap().shape() != d.shape())
            {
                None
            } else {
                Some(
                    sets.iter()
                        .skip(1)
                        .fold(d.clone(), |acc, s| acc + s.d0.as_ref().unwrap())
                        / k,
                )
            }
        } else {
            None
        };
        Ok(Self {
            mode: first.mode,
            u0: mean(|s| &s.u0),
            x0: mean(|s| &s.x0),
            x1: mean(|s| &s.x1),
            z0: mean(|s| &s.z0),
            d0,
        })
    }

    /// Column-wise concatenation of several experiments.
    pub fn hstack(sets: &[DataMatrices]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::input("cannot concatenate an empty list of datasets"))?;
        let rows_match = sets.iter().all(|s| {
            s.mode == first.mode
                && s.u0.nrows() == first.u0.nrows()
                && s.x0.nrows() == first.x0.nrows()
                && s.x1.nrows() == first.x1.nrows()
                && s.z0.nrows() == first.z0.nrows()
        });
        if !rows_match {
            return Err(Error::input("datasets to concatenate differ in row counts"));
        }
        let cat = |f: fn(&DataMatrices) -> &DMatrix<f64>| {
            let blocks: Vec<&DMatrix<f64>> = sets.iter().map(f).collect();
            linalg::hstack(&blocks)
        };
        let d0 = if sets.iter().all(|s| s.d0.is_some()) {
            let blocks: Vec<&DMatrix<f64>> = sets.iter().map(|s| s.d0.as_ref().unwrap()).collect();
            if blocks.iter().all(|b| b.nrows() == blocks[0].nrows()) {
                Some(linalg::hstack(&blocks))
            } else {
                None
            }
        } else {
            None
        };
        Ok(Self {
            mode: first.mode,
            u0: cat(|s| &s.u0),
            x0: cat(|s| &s.x0),
            x1: cat(|s| &s.x1),
            z0: cat(|s| &s.z0),
            d0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisFunction;

    fn pendulum_lib() -> BasisLibrary {
        BasisLibrary::new(2, 0, vec![BasisFunction::Sine { index: 0 }]).unwrap()
    }

    fn toy_traj(t: usize) -> Trajectory {
        let states = DMatrix::from_fn(2, t + 1, |i, k| ((i + 1) * (k + 2)) as f64 * 0.01);
        let inputs = DMatrix::from_fn(1, t, |_, k| (k as f64).sin());
        Trajectory::new(states, inputs).unwrap()
    }

    #[test]
    fn discrete_shapes_and_columns() {
        let lib = pendulum_lib();
        let d = DataMatrices::build(&toy_traj(10), &lib, DataMode::Discrete).unwrap();
        assert_eq!(d.u0.shape(), (1, 10));
        assert_eq!(d.z0.shape(), (3, 10));
        assert_eq!(d.x1.shape(), (2, 10));
        for k in 0..10 {
            let z = lib.eval(&[d.x0[(0, k)], d.x0[(1, k)]]).unwrap();
            assert_eq!(d.z0.column(k), z.column(0));
        }
    }

    #[test]
    fn extended_drops_one_column() {
        let lib = BasisLibrary::new(2, 1, vec![BasisFunction::Sine { index: 0 }]).unwrap();
        let traj = toy_traj(10);
        let d = DataMatrices::build(&traj, &lib, DataMode::Extended).unwrap();
        assert_eq!(d.len(), 9);
        assert_eq!(d.z0.nrows(), 4);
        assert_eq!(d.u0[(0, 0)], traj.inputs[(0, 1)]);
        // last row of Xi1 is V0
        assert_eq!(d.x1.row(2), d.u0.row(0));
    }

    #[test]
    fn output_rows_are_shifted() {
        let lib = BasisLibrary::new(2, 0, vec![BasisFunction::monomial(&[2, 0])]).unwrap();
        let mut traj = toy_traj(5);
        traj.outputs = Some((0..7).map(|k| k as f64).collect());
        let d = DataMatrices::build(&traj, &lib, DataMode::Output).unwrap();
        assert_eq!(
            d.x0.row(0).iter().copied().collect::<Vec<_>>(),
            [0.0, 1.0, 2.0, 3.0, 4.0]
        );
        assert_eq!(
            d.x0.row(1).iter().copied().collect::<Vec<_>>(),
            [1.0, 2.0, 3.0, 4.0, 5.0]
        );
        assert_eq!(
            d.x1.row(1).iter().copied().collect::<Vec<_>>(),
            [2.0, 3.0, 4.0, 5.0, 6.0]
        );
        assert_eq!(d.z0[(2, 1)], traj.states[(0, 1)].powi(2));
    }

    #[test]
    fn missing_channels_are_input_errors() {
        let lib = pendulum_lib();
        assert!(matches!(
            DataMatrices::build(&toy_traj(4), &lib, DataMode::Continuous),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            DataMatrices::build(&toy_traj(4), &lib, DataMode::Output),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn short_data_is_deficient() {
        let d = DataMatrices::build(&toy_traj(2), &pendulum_lib(), DataMode::Discrete).unwrap();
        assert!(!d.richness().z0.is_full());
    }

    #[test]
    fn averaging_identical_sets_is_identity() {
        let d = DataMatrices::build(&toy_traj(6), &pendulum_lib(), DataMode::Discrete).unwrap();
        let avg = DataMatrices::average(&[d.clone(), d.clone()]).unwrap();
        assert!((avg.z0 - &d.z0).abs().max() < 1e-15);
        assert_eq!(DataMatrices::average(std::slice::from_ref(&d)).unwrap(), d);
        let other = DataMatrices::build(&toy_traj(5), &pendulum_lib(), DataMode::Discrete).unwrap();
        assert!(DataMatrices::average(&[d, other]).is_err());
    }
}
