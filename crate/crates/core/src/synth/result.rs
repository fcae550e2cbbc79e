use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::solver::SolveStatus;
use crate::basis::BasisLibrary;
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    Exact,
    MinNorm,
    Sparse,
    Continuous,
    Extended,
    Robust,
    NormalForm,
    Verify,
}

impl SynthMode {
    pub fn is_continuous(self) -> bool {
        self == SynthMode::Continuous
    }
}

/// What the solution guarantees about the closed loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClaim {
    /// Nonlinearity fully cancelled: the closed loop is linear and stable.
    Global,
    /// Stable linear part with a residual nonlinearity that is small near
    /// the origin.
    Local,
    /// The dictionary does not satisfy the small-remainder hypothesis, so
    /// only the linear part is certified.
    LinearPartOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Largest violation of the equality constraints.
    pub equality: f64,
    /// max |Z0 [G1 G2] - I|.
    pub identity: f64,
    /// Smallest `lambda_min(L) - margin` over the LMIs L of the program.
    pub min_lmi_eigenvalue: f64,
    /// Margin used for strict LMIs.
    pub margin: f64,
    /// Spectral radius of M (discrete) or its largest real eigenvalue part
    /// (continuous).
    pub stability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: SolveStatus,
    pub iterations: u32,
    pub tolerance: f64,
}

/// Robust-design parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustParams {
    /// Disturbance energy bound: D D' <= Delta Delta'.
    #[serde(with = "crate::serde_mat")]
    pub delta: DMatrix<f64>,
    /// Decrease margin of the Lyapunov function.
    #[serde(with = "crate::serde_mat")]
    pub omega: DMatrix<f64>,
    pub lambda_p: f64,
    pub lambda_g: f64,
    /// Disturbance input matrix; identity when absent.
    #[serde(
        default,
        with = "crate::serde_mat::opt",
        skip_serializing_if = "Option::is_none"
    )]
    pub e: Option<DMatrix<f64>>,
}

impl RobustParams {
    /// Delta = delta sqrt(T) I_s for a pointwise bound |d| <= delta.
    pub fn from_pointwise_bound(
        delta: f64,
        horizon: usize,
        channels: usize,
        omega: DMatrix<f64>,
    ) -> Self {
        Self {
            delta: DMatrix::identity(channels, channels) * (delta * (horizon as f64).sqrt()),
            omega,
            lambda_p: 0.0,
            lambda_g: 0.0,
            e: None,
        }
    }

    pub fn disturbance_matrix(&self, n: usize) -> DMatrix<f64> {
        self.e.clone().unwrap_or_else(|| DMatrix::identity(n, n))
    }
}

/// "Stabilizing with probability at least p", where p bounds the chance
/// that the disturbance record satisfied the design bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityClaim {
    pub probability: f64,
    pub statement: String,
}

/// Outcome of a synthesis program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub mode: SynthMode,
    /// Dictionary labels for the columns of K.
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(with = "crate::serde_mat")]
    pub k: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub p1: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub y1: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub g1: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub g2: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub m: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub n: DMatrix<f64>,
    pub objective: f64,
    pub claim: StabilityClaim,
    pub residuals: ResidualReport,
    pub solver: SolverStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust: Option<RobustParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_probability: Option<ProbabilityClaim>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Content hashes of the inputs, filled in by the front end.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

impl SynthesisResult {
    pub fn state_dim(&self) -> usize {
        self.m.nrows()
    }

    /// Attach dictionary labels and check the small-remainder hypothesis.
    pub fn with_library(mut self, lib: &BasisLibrary) -> Self {
        self.labels = lib.labels();
        if self.mode == SynthMode::NormalForm {
            let n = self.state_dim();
            let mut labels: Vec<String> = (1..=n).map(|i| format!("w{i}")).collect();
            labels.extend(lib.labels().into_iter().skip(lib.coord_dim()));
            self.labels = labels;
        }
        if self.claim == StabilityClaim::Local && !lib.is_small_near_origin() {
            self.claim = StabilityClaim::LinearPartOnly;
            self.warnings.push(
                "dictionary nonlinearity is not o(|x|) at the origin; only the linear part is certified".into(),
            );
        }
        self
    }

    /// K with entries below `1e-6 * max|K|` set to zero, for display.
    pub fn display_gain(&self) -> DMatrix<f64> {
        let scale = linalg::max_abs(&self.k);
        self.k.map(|v| if v.abs() < 1e-6 * scale { 0.0 } else { v })
    }

    /// Labelled gain rows for human consumption.
    pub fn gain_table(&self) -> String {
        let k = self.display_gain();
        let mut out = String::new();
        for i in 0..k.nrows() {
            let cells: Vec<String> = (0..k.ncols())
                .map(|j| {
                    let label = self
                        .labels
                        .get(j)
                        .cloned()
                        .unwrap_or_else(|| format!("z{}", j + 1));
                    format!("{label}: {:.4}", k[(i, j)])
                })
                .collect();
            out.push_str(&format!("u{} = [{}]\n", i + 1, cells.join(", ")));
        }
        out
    }
}
