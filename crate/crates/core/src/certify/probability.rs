use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::synth::{ProbabilityClaim, SynthesisResult};

/// Bound on the norm of an averaged disturbance record and the probability
/// with which it holds. The probability is the raw formula value and can be
/// nonpositive, in which case the statement is vacuous.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBound {
    pub bound: f64,
    pub probability: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::input(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Disturbances bounded by `delta` in norm, with covariance norm
/// `sigma_norm`, averaged over `repetitions` experiments of length `horizon`
/// on `channels` channels; `mu` is the slack.
pub fn prob_bound_bounded(
    delta: f64,
    sigma_norm: f64,
    horizon: usize,
    repetitions: usize,
    mu: f64,
    channels: usize,
) -> Result<ProbabilityBound> {
    positive("delta", delta)?;
    positive("sigma_norm", sigma_norm)?;
    positive("mu", mu)?;
    if horizon == 0 || repetitions == 0 || channels == 0 {
        return Err(Error::input(
            "horizon, repetitions and channels must be positive",
        ));
    }
    let (t, n, s) = (horizon as f64, repetitions as f64, channels as f64);
    Ok(ProbabilityBound {
        bound: (t * (sigma_norm / n + mu)).sqrt(),
        probability: 1.0
            - 2.0 * s * (-t * n * mu * mu / (2.0 * delta * delta * (sigma_norm + n * mu))).exp(),
    })
}

/// Zero-mean Gaussian disturbances with covariance `sigma`.
pub fn prob_bound_gaussian(
    sigma: &DMatrix<f64>,
    horizon: usize,
    repetitions: usize,
    mu: f64,
) -> Result<ProbabilityBound> {
    if !sigma.is_square() || sigma.is_empty() {
        return Err(Error::input("covariance must be a nonempty square matrix"));
    }
    if linalg::max_abs(&(sigma - sigma.transpose())) > 1e-12 * linalg::max_abs(sigma).max(1.0) {
        return Err(Error::input("covariance must be symmetric"));
    }
    let lmin = linalg::min_sym_eigenvalue(sigma);
    if lmin < -1e-12 * linalg::max_abs(sigma).max(1.0) {
        return Err(Error::input("covariance must be positive semidefinite"));
    }
    positive("mu", mu)?;
    if horizon == 0 || repetitions == 0 {
        return Err(Error::input("horizon and repetitions must be positive"));
    }
    let (t, n) = (horizon as f64, repetitions as f64);
    let root_max = linalg::max_sym_eigenvalue(sigma).max(0.0).sqrt();
    Ok(ProbabilityBound {
        bound: (t / n).sqrt() * (root_max * (1.0 + mu) + (sigma.trace().max(0.0) / t).sqrt()),
        probability: 1.0 - (-t * mu * mu / 2.0).exp(),
    })
}

/// Records that a robust design stabilizes with probability at least `p`,
/// where `p` bounds the chance that the data met the design bound.
pub fn stability_probability(mut result: SynthesisResult, p: f64) -> Result<SynthesisResult> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!(
            "probability must lie in [0, 1], got {p}"
        )));
    }
    if result.robust.is_none() {
        return Err(Error::input(
            "a stability probability applies to robust designs only",
        ));
    }
    let statement = if p == 1.0 {
        "stabilizing for every disturbance record within the design bound".to_string()
    } else {
        format!("stabilizing with probability at least {p}")
    };
    result.stability_probability = Some(ProbabilityClaim {
        probability: p,
        statement,
    });
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_case_matches_closed_form() {
        let r = prob_bound_bounded(0.01, 1e-4 / 3.0, 30, 100, 4e-5, 1).unwrap();
        let bound = (30.0f64 * (1e-4 / 300.0 + 4e-5)).sqrt();
        let expo: f64 = 30.0 * 100.0 * 16e-10 / (2.0 * 1e-4 * (1e-4 / 3.0 + 100.0 * 4e-5));
        assert_eq!(r.bound, bound);
        assert!((r.probability - (1.0 - 2.0 * (-expo).exp())).abs() < 1e-15);
        assert!((r.bound - 0.0348).abs() < 1e-3 && (r.probability - 0.9948).abs() < 1e-3);
    }

    #[test]
    fn gaussian_case_matches_closed_form() {
        let s2 = 0.04;
        let r = prob_bound_gaussian(&DMatrix::from_element(1, 1, s2), 30, 100, 0.5).unwrap();
        let sigma = s2.sqrt();
        assert!((r.bound - 0.3f64.sqrt() * (sigma * 1.5 + sigma / 30f64.sqrt())).abs() < 1e-14);
        assert!((r.probability - (1.0 - (-3.75f64).exp())).abs() < 1e-15);
        let zero = prob_bound_gaussian(&DMatrix::zeros(2, 2), 10, 3, 0.1).unwrap();
        assert_eq!(zero.bound, 0.0);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        assert!(prob_bound_bounded(0.0, 1.0, 1, 1, 1.0, 1).is_err());
        assert!(prob_bound_bounded(1.0, 1.0, 1, 0, 1.0, 1).is_err());
        assert!(prob_bound_gaussian(
            &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            1,
            1,
            1.0
        )
        .is_err());
    }
}
