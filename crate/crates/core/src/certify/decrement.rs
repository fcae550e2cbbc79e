use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFunction, BasisLibrary};
use crate::error::{Error, Result};
use crate::linalg;
use crate::synth::{SynthMode, SynthesisResult};

/// V(x) = x' Pinv x with Pinv = P1^-1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadLyapunov {
    #[serde(with = "crate::serde_mat")]
    pinv: DMatrix<f64>,
}

impl QuadLyapunov {
    pub fn from_p1(p1: &DMatrix<f64>) -> Result<Self> {
        let inv = linalg::inverse(p1).ok_or_else(|| Error::input("P1 is singular"))?;
        Self::from_pinv(linalg::symmetrize(&inv))
    }

    pub fn from_pinv(pinv: DMatrix<f64>) -> Result<Self> {
        if pinv.nrows() != pinv.ncols() || pinv.is_empty() {
            return Err(Error::input("Lyapunov matrix must be square and nonempty"));
        }
        let asym = linalg::max_abs(&(&pinv - pinv.transpose()));
        if asym > 1e-10 * linalg::max_abs(&pinv).max(1.0) {
            return Err(Error::input("Lyapunov matrix is not symmetric"));
        }
        if linalg::min_sym_eigenvalue(&pinv) <= 0.0 {
            return Err(Error::input("Lyapunov matrix is not positive definite"));
        }
        Ok(Self {
            pinv: linalg::symmetrize(&pinv),
        })
    }

    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    pub fn dim(&self) -> usize {
        self.pinv.nrows()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate().take(n) {
            let row: f64 = x
                .iter()
                .take(n)
                .enumerate()
                .map(|(j, xj)| self.pinv[(i, j)] * xj)
                .sum();
            acc += xi * row;
        }
        acc
    }

    /// Largest gamma with {V <= gamma} inside the box |x_i| <= half_widths[i].
    pub fn gamma_inside_box(&self, half_widths: &[f64]) -> f64 {
        let p1 = linalg::inverse(&self.pinv).expect("positive definite");
        half_widths
            .iter()
            .enumerate()
            .map(|(i, b)| b * b / p1[(i, i)])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Bound on the disturbance magnitude |d|.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceBound {
    Constant {
        delta: f64,
    },
    /// delta(x) = scale * |f(x)|.
    StateDependent {
        scale: f64,
        function: BasisFunction,
    },
}

impl DisturbanceBound {
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            DisturbanceBound::Constant { delta } => *delta,
            DisturbanceBound::StateDependent { scale, function } => scale * function.eval(x).abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DisturbanceBound::Constant { delta } if !(delta.is_finite() && *delta >= 0.0) => Err(
                Error::input("disturbance bound must be finite and nonnegative"),
            ),
            DisturbanceBound::StateDependent { scale, .. }
                if !(scale.is_finite() && *scale >= 0.0) =>
            {
                Err(Error::input(
                    "disturbance bound scale must be finite and nonnegative",
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Terms of the data-based decrement bound for designs from noisy data.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyTerms {
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub delta_norm: f64,
    /// Pinv Omega Pinv.
    pub phi_lower: DMatrix<f64>,
    /// |E' Pinv E|.
    pub r3: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    Nominal,
    Noisy(Box<NoisyTerms>),
}

/// Evaluates upper bounds on V(x+) - V(x) from synthesis quantities only.
#[derive(Clone, Debug, PartialEq)]
pub struct DecrementModel {
    pub lyapunov: QuadLyapunov,
    pub m: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub library: BasisLibrary,
    pub variant: Variant,
}

/// Pieces shared by every evaluator at one point.
struct Parts {
    /// M x + N Q(x)
    lin_next: DVector<f64>,
    /// N Q(x)
    w: DVector<f64>,
    q: DVector<f64>,
}

impl DecrementModel {
    fn check_dims(result: &SynthesisResult, library: &BasisLibrary) -> Result<()> {
        if result.mode == SynthMode::NormalForm {
            return Err(Error::input(
                "normal-form designs are certified in output coordinates, not supported here",
            ));
        }
        let n = result.m.nrows();
        if library.coord_dim() != n || library.nonlinear_dim() != result.n.ncols() {
            return Err(Error::input(format!(
                "dictionary ({} coordinates, {} nonlinear) does not match the design ({n}, {})",
                library.coord_dim(),
                library.nonlinear_dim(),
                result.n.ncols()
            )));
        }
        Ok(())
    }

    /// h(x) = (Mx + NQ)' Pinv (Mx + NQ) - x' Pinv x.
    pub fn nominal(result: &SynthesisResult, library: &BasisLibrary) -> Result<Self> {
        Self::check_dims(result, library)?;
        Ok(Self {
            lyapunov: QuadLyapunov::from_p1(&result.p1)?,
            m: result.m.clone(),
            n: result.n.clone(),
            library: library.clone(),
            variant: Variant::Nominal,
        })
    }

    /// l(x) with Delta, Omega and E taken from a robust design.
    pub fn noisy(result: &SynthesisResult, library: &BasisLibrary) -> Result<Self> {
        let params = result.robust.as_ref().ok_or_else(|| {
            Error::input("the noisy decrement needs a robust design (Delta, Omega)")
        })?;
        let e = params.disturbance_matrix(result.m.nrows());
        Self::noisy_with(
            result,
            library,
            linalg::spectral_norm(&params.delta),
            &params.omega,
            &e,
        )
    }

    pub fn noisy_with(
        result: &SynthesisResult,
        library: &BasisLibrary,
        delta_norm: f64,
        omega: &DMatrix<f64>,
        e: &DMatrix<f64>,
    ) -> Result<Self> {
        Self::check_dims(result, library)?;
        let lyapunov = QuadLyapunov::from_p1(&result.p1)?;
        let n = result.m.nrows();
        if omega.shape() != (n, n) || e.nrows() != n {
            return Err(Error::input("Omega or E has the wrong shape"));
        }
        let pinv = lyapunov.pinv().clone();
        let phi_lower = linalg::symmetrize(&(&pinv * omega * &pinv));
        let r3 = linalg::spectral_norm(&(e.transpose() * &pinv * e));
        Ok(Self {
            lyapunov,
            m: result.m.clone(),
            n: result.n.clone(),
            library: library.clone(),
            variant: Variant::Noisy(Box::new(NoisyTerms {
                g1: result.g1.clone(),
                g2: result.g2.clone(),
                e: e.clone(),
                delta_norm,
                phi_lower,
                r3,
            })),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn is_noisy(&self) -> bool {
        matches!(self.variant, Variant::Noisy(_))
    }

    fn parts(&self, x: &[f64]) -> Parts {
        let xv = DVector::from_column_slice(x);
        let q = self.library.eval_nonlinear(x);
        let w = &self.n * &q;
        Parts {
            lin_next: &self.m * xv + &w,
            w,
            q,
        }
    }

    /// Exact decrement of the data-based closed loop x+ = M x + N Q(x).
    pub fn h(&self, x: &[f64]) -> f64 {
        let p = self.parts(x);
        self.lyapunov.value(p.lin_next.as_slice()) - self.lyapunov.value(x)
    }

    fn noisy_terms(&self) -> &NoisyTerms {
        match &self.variant {
            Variant::Noisy(t) => t,
            Variant::Nominal => panic!("noisy decrement requested from a nominal model"),
        }
    }

    /// Upper bound l(x) on the decrement for every disturbance record
    /// within the Delta bound, with d = 0 afterwards. Nominal models return
    /// h(x).
    pub fn ell(&self, x: &[f64]) -> f64 {
        let Variant::Noisy(t) = &self.variant else {
            return self.h(x);
        };
        let pinv = self.lyapunov.pinv();
        let p = self.parts(x);
        let xv = DVector::from_column_slice(x);
        // a = 2 M x + N Q, b = 2 G1 x + G2 Q, c = G2 Q, w = N Q
        let a = &p.lin_next + &self.m * &xv;
        let c = &t.g2 * &p.q;
        let b = &t.g1 * &xv * 2.0 + &c;
        let pa = pinv * &a;
        let l0 = -xv.dot(&(&t.phi_lower * &xv));
        let l1 = pa.dot(&p.w);
        let l2 = t.delta_norm * (t.e.transpose() * &pa).norm() * c.norm();
        let l3 = t.delta_norm * b.norm() * (t.e.transpose() * (pinv * &p.w)).norm();
        let l4 = t.delta_norm * t.delta_norm * t.r3 * b.norm() * c.norm();
        l0 + l1 + l2 + l3 + l4
    }

    /// Extra decrement g(x, delta) caused by a disturbance |d| <= delta.
    pub fn g(&self, x: &[f64], delta: f64) -> f64 {
        let t = self.noisy_terms();
        let pinv = self.lyapunov.pinv();
        let p = self.parts(x);
        let xv = DVector::from_column_slice(x);
        let r1 = 2.0 * (t.e.transpose() * (pinv * &p.lin_next)).norm();
        let r2 = 2.0 * t.delta_norm * t.r3 * (&t.g1 * &xv + &t.g2 * &p.q).norm();
        r1 * delta + r2 * delta + t.r3 * delta * delta
    }

    /// The decrement bound used by the certificates: h for nominal models,
    /// l + g(delta) for noisy ones (g omitted without a bound).
    pub fn bound(&self, x: &[f64], disturbance: Option<&DisturbanceBound>) -> f64 {
        match (&self.variant, disturbance) {
            (Variant::Nominal, _) => self.h(x),
            (Variant::Noisy(_), None) => self.ell(x),
            (Variant::Noisy(_), Some(d)) => self.ell(x) + self.g(x, d.at(x)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_value_and_box() {
        let p1 = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let v = QuadLyapunov::from_p1(&p1).unwrap();
        assert!((v.value(&[1.0, 1.0]) - 2.5).abs() < 1e-14);
        // {x1^2/2 + 2 x2^2 <= g} fits |x| <= 1 for g <= min(1/2, 1/0.5)
        assert!((v.gamma_inside_box(&[1.0, 1.0]) - 0.5).abs() < 1e-14);
        assert!(
            QuadLyapunov::from_pinv(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err()
        );
    }

    #[test]
    fn state_dependent_bound_uses_absolute_value() {
        let b = DisturbanceBound::StateDependent {
            scale: 2.0,
            function: BasisFunction::SineRemainder { index: 0 },
        };
        let x = [0.5, 0.0];
        assert!((b.at(&x) - 2.0 * (0.5 - 0.5f64.sin())).abs() < 1e-15);
        assert!(b.at(&x) > 0.0);
    }
}
