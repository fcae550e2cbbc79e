use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFunction, BasisLibrary};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Discrete,
    Continuous,
}

/// Ground-truth plant `x+ = A Z*(x[, u]) + B u + E d` (or `xdot = ...`).
///
/// When the dictionary is input-augmented (`input_dim > 0`), the input
/// enters through Z* and `B` is typically zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub name: String,
    #[serde(with = "crate::serde_mat")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub b: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub e: DMatrix<f64>,
    pub dictionary: BasisLibrary,
    /// Index of the measured state when the plant has a scalar output.
    #[serde(default)]
    pub output_index: Option<usize>,
    pub time: TimeMode,
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        e: DMatrix<f64>,
        dictionary: BasisLibrary,
        time: TimeMode,
    ) -> Result<Self> {
        let m = Self {
            name: name.into(),
            a,
            b,
            e,
            dictionary,
            output_index: None,
            time,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_output(mut self, index: usize) -> Result<Self> {
        if index >= self.state_dim() {
            return Err(Error::input("output index out of range"));
        }
        self.output_index = Some(index);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dictionary.state_dim();
        if self.a.nrows() != n || self.a.ncols() != self.dictionary.dim() {
            return Err(Error::input(format!(
                "A is {}x{}, dictionary needs {n}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.dictionary.dim()
            )));
        }
        if self.b.nrows() != n || self.e.nrows() != n {
            return Err(Error::input("B and E must have n rows"));
        }
        let m_dict = self.dictionary.input_dim();
        if m_dict > 0 && m_dict != self.b.ncols() {
            return Err(Error::input(
                "input-augmented dictionary disagrees with B's width",
            ));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.e.ncols()
    }

    /// Z*(x[, u]) at one point.
    pub fn features(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        if self.dictionary.input_dim() > 0 {
            let p: Vec<f64> = x.iter().chain(u.iter()).copied().collect();
            self.dictionary.eval_unchecked(&p)
        } else {
            self.dictionary.eval_unchecked(x.as_slice())
        }
    }

    /// Right-hand side: successor state (discrete) or derivative (continuous).
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.a * self.features(x, u) + &self.b * u;
        if !d.is_empty() {
            out += &self.e * d;
        }
        out
    }

    /// One sampling step. Continuous models use an RK4 step of length `dt`
    /// with `u` and `d` held constant.
    pub fn step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
        dt: f64,
    ) -> DVector<f64> {
        match self.time {
            TimeMode::Discrete => self.rhs(x, u, d),
            TimeMode::Continuous => {
                let k1 = self.rhs(x, u, d);
                let k2 = self.rhs(&(x + &k1 * (dt / 2.0)), u, d);
                let k3 = self.rhs(&(x + &k2 * (dt / 2.0)), u, d);
                let k4 = self.rhs(&(x + &k3 * dt), u, d);
                x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
            }
        }
    }

    /// w(x) = (y, y+, ..., y+^(n-1)) along the unforced map; the plant is
    /// assumed to have relative degree n so the input does not matter.
    pub fn output_coordinates(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let idx = self
            .output_index
            .ok_or_else(|| Error::input(format!("model {} has no output", self.name)))?;
        let n = self.state_dim();
        let zero_u = DVector::zeros(self.input_dim());
        let zero_d = DVector::zeros(0);
        let mut w = DVector::zeros(n);
        let mut cur = x.clone();
        for i in 0..n {
            w[i] = cur[idx];
            if i + 1 < n {
                cur = self.rhs(&cur, &zero_u, &zero_d);
            }
        }
        Ok(w)
    }
}

/// How the process disturbance is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    None,
    /// Each of the s components uniform in [-delta/sqrt(s), delta/sqrt(s)],
    /// so `|d| <= delta` surely.
    Uniform {
        delta: f64,
    },
    Gaussian {
        #[serde(with = "crate::serde_mat")]
        covariance: DMatrix<f64>,
    },
    /// d(x), one expression per disturbance channel over the state.
    StateDependent {
        functions: Vec<BasisFunction>,
    },
}

impl DisturbanceSpec {
    pub fn validate(&self, channels: usize) -> Result<()> {
        match self {
            DisturbanceSpec::None => Ok(()),
            DisturbanceSpec::Uniform { delta } => {
                if *delta >= 0.0 && delta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::input("uniform bound must be finite and nonnegative"))
                }
            }
            DisturbanceSpec::Gaussian { covariance } => {
                if covariance.shape() != (channels, channels) {
                    return Err(Error::input("covariance must be s x s"));
                }
                if (covariance - covariance.transpose()).abs().max() > 1e-10 {
                    return Err(Error::input("covariance must be symmetric"));
                }
                if crate::linalg::min_sym_eigenvalue(covariance) < -1e-12 {
                    return Err(Error::input("covariance must be positive semidefinite"));
                }
                Ok(())
            }
            DisturbanceSpec::StateDependent { functions } => {
                if functions.len() != channels {
                    Err(Error::input(
                        "one function per disturbance channel required",
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Uniform per-component half-width, or zero for other laws.
    pub fn bound(&self) -> f64 {
        match self {
            DisturbanceSpec::Uniform { delta } => *delta,
            _ => 0.0,
        }
    }
}
