use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{monomials_up_to_degree, BasisFunction, BasisLibrary, DataMode};
use crate::certify::{DisturbanceBound, GridSpec};
use crate::error::{Error, Result};
use crate::simlab::{catalog, DisturbanceSpec, ExperimentConfig, SystemModel, TimeMode};
use crate::synth::MatrixNorm;

/// A complete pipeline description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default = "no_disturbance")]
    pub disturbance: DisturbanceSpec,
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub robust: Option<RobustSection>,
    #[serde(default)]
    pub probability: Option<ProbabilitySection>,
    #[serde(default)]
    pub certify: Option<CertifySection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn no_disturbance() -> DisturbanceSpec {
    DisturbanceSpec::None
}

/// A catalog plant by name, or a custom plant x+ = A Z(x) + B u + E d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub custom: Option<CustomModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    #[serde(with = "crate::serde_mat")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::serde_mat")]
    pub b: DMatrix<f64>,
    #[serde(default, with = "crate::serde_mat::opt")]
    pub e: Option<DMatrix<f64>>,
    /// Nonlinear entries of the plant dictionary; states come first.
    #[serde(default)]
    pub nonlinear: Vec<BasisFunction>,
    #[serde(default)]
    pub continuous: bool,
    #[serde(default)]
    pub output_index: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionarySpec {
    /// The plant's own dictionary.
    #[default]
    Model,
    /// Taylor-remainder version of the plant dictionary.
    TaylorRemainder,
    Linear,
    /// All monomials of the states with degree in [min_degree, degree];
    /// the states themselves are always the first entries.
    Monomials {
        degree: u32,
        #[serde(default = "two")]
        min_degree: u32,
    },
    Functions {
        functions: Vec<BasisFunction>,
    },
}

fn two() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "ten")]
    pub horizon: usize,
    #[serde(default = "half_range")]
    pub input_range: [f64; 2],
    #[serde(default = "half_range")]
    pub initial_range: [f64; 2],
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default = "period")]
    pub sampling_period: f64,
}

fn ten() -> usize {
    10
}
fn one() -> usize {
    1
}
fn half_range() -> [f64; 2] {
    [-0.5, 0.5]
}
fn period() -> f64 {
    0.1
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            horizon: ten(),
            input_range: half_range(),
            initial_range: half_range(),
            repetitions: one(),
            sampling_period: period(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Exact,
    #[serde(rename = "minnorm")]
    MinNorm,
    Sparse,
    #[serde(rename = "ct")]
    Continuous,
    Extended,
    Robust,
    NormalForm,
    Verify,
}

impl ModeName {
    pub fn data_mode(self) -> DataMode {
        match self {
            ModeName::Continuous => DataMode::Continuous,
            ModeName::Extended => DataMode::Extended,
            ModeName::NormalForm => DataMode::Output,
            _ => DataMode::Discrete,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub mode: ModeName,
    #[serde(default = "spectral")]
    pub norm: MatrixNorm,
    /// Sparse mode: also penalize the linear block and normalize P1 >= I.
    #[serde(default)]
    pub regularize_linear: bool,
    /// Verify mode: the gain to check; open loop when absent.
    #[serde(default, with = "crate::serde_mat::opt")]
    pub gain: Option<DMatrix<f64>>,
}

fn spectral() -> MatrixNorm {
    MatrixNorm::Spectral
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustSection {
    /// Pointwise bound |d| <= delta, giving Delta = delta sqrt(T) I.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Explicit Delta.
    #[serde(default, with = "crate::serde_mat::opt")]
    pub record_bound: Option<DMatrix<f64>>,
    /// Take Delta from the probability section's bound.
    #[serde(default)]
    pub use_probability_bound: bool,
    /// Identity when absent.
    #[serde(default, with = "crate::serde_mat::opt")]
    pub omega: Option<DMatrix<f64>>,
    #[serde(default)]
    pub lambda_p: f64,
    #[serde(default)]
    pub lambda_g: f64,
    /// The plant's disturbance matrix when absent.
    #[serde(default, with = "crate::serde_mat::opt")]
    pub e: Option<DMatrix<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    Bounded,
    Gaussian,
}

/// Bound on the averaged disturbance record and its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbabilitySection {
    pub law: NoiseLaw,
    /// Bounded law: |d| <= delta.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Bounded law: norm of the disturbance covariance.
    #[serde(default)]
    pub sigma_norm: Option<f64>,
    /// Gaussian law: covariance.
    #[serde(default, with = "crate::serde_mat::opt")]
    pub covariance: Option<DMatrix<f64>>,
    pub mu: f64,
    #[serde(default = "one")]
    pub channels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifyKind {
    Roa,
    Rpi,
    Pi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecrementKind {
    Nominal,
    Noisy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySection {
    pub kind: CertifyKind,
    /// Noisy for robust designs, nominal otherwise, when absent.
    #[serde(default)]
    pub decrement: Option<DecrementKind>,
    /// Constant bound on |d|.
    #[serde(default)]
    pub delta: Option<f64>,
    /// State-dependent bound scale * |function(x)|.
    #[serde(default)]
    pub delta_function: Option<DeltaFunction>,
    /// Default grid when absent.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Region where the disturbance bound is asserted (kind = "pi").
    #[serde(default)]
    pub region: Option<BoxRegion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaFunction {
    pub scale: f64,
    pub function: BasisFunction,
}

impl CertifySection {
    pub fn disturbance_bound(&self) -> Result<Option<DisturbanceBound>> {
        match (&self.delta, &self.delta_function) {
            (Some(_), Some(_)) => Err(Error::input(
                "give either delta or delta_function, not both",
            )),
            (Some(d), None) => Ok(Some(DisturbanceBound::Constant { delta: *d })),
            (None, Some(f)) => Ok(Some(DisturbanceBound::StateDependent {
                scale: f.scale,
                function: f.function.clone(),
            })),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "out_dir")]
    pub dir: PathBuf,
}

fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: out_dir() }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks that every field the chosen mode needs is present.
    pub fn validate(&self) -> Result<()> {
        match (&self.model.name, &self.model.custom) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(Error::input(
                    "[model] needs exactly one of `name` or `custom`",
                ))
            }
        }
        let mode = self.synthesis.mode;
        if mode == ModeName::Robust {
            let r = self
                .robust
                .as_ref()
                .ok_or_else(|| Error::input("robust mode needs a [robust] section"))?;
            let sources = [
                r.delta.is_some(),
                r.record_bound.is_some(),
                r.use_probability_bound,
            ]
            .iter()
            .filter(|b| **b)
            .count();
            if sources != 1 {
                return Err(Error::input(
                    "[robust] needs exactly one of delta, record_bound or use_probability_bound",
                ));
            }
            if r.use_probability_bound && self.probability.is_none() {
                return Err(Error::input(
                    "use_probability_bound needs a [probability] section",
                ));
            }
        }
        if mode != ModeName::Verify && self.synthesis.gain.is_some() {
            return Err(Error::input("synthesis.gain is only used in verify mode"));
        }
        if let Some(c) = &self.certify {
            let bound = c.disturbance_bound()?;
            match c.kind {
                CertifyKind::Rpi | CertifyKind::Pi
                    if !matches!(bound, Some(DisturbanceBound::Constant { .. })) =>
                {
                    return Err(Error::input(
                        "rpi and pi certificates need a constant `delta`",
                    ))
                }
                CertifyKind::Pi if c.region.is_none() => {
                    return Err(Error::input(
                        "pi certificates need the `region` where the bound holds",
                    ))
                }
                _ => {}
            }
            if mode == ModeName::NormalForm {
                return Err(Error::input(
                    "certification of normal-form designs is not supported",
                ));
            }
        }
        if let Some(p) = &self.probability {
            match p.law {
                NoiseLaw::Bounded if p.delta.is_none() || p.sigma_norm.is_none() => {
                    return Err(Error::input(
                        "bounded probability law needs delta and sigma_norm",
                    ))
                }
                NoiseLaw::Gaussian if p.covariance.is_none() => {
                    return Err(Error::input("gaussian probability law needs covariance"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let e = &self.experiment;
        ExperimentConfig {
            horizon: e.horizon,
            input_range: e.input_range,
            initial_range: e.initial_range,
            seed: self.seed,
            repetitions: e.repetitions,
            sampling_period: e.sampling_period,
        }
    }

    pub fn build_model(&self) -> Result<SystemModel> {
        if let Some(name) = &self.model.name {
            return catalog::model(name);
        }
        let c = self.model.custom.as_ref().expect("validated");
        let n = c.a.nrows();
        let lib = BasisLibrary::new(n, 0, c.nonlinear.clone())?;
        let e = c.e.clone().unwrap_or_else(|| DMatrix::zeros(n, 0));
        let time = if c.continuous {
            TimeMode::Continuous
        } else {
            TimeMode::Discrete
        };
        let m = SystemModel::new("custom", c.a.clone(), c.b.clone(), e, lib, time)?;
        match c.output_index {
            Some(i) => m.with_output(i),
            None => Ok(m),
        }
    }

    /// Dictionary used by the controller.
    pub fn build_library(&self, model: &SystemModel) -> Result<BasisLibrary> {
        let n = model.state_dim();
        match &self.dictionary {
            DictionarySpec::Model => Ok(model.dictionary.clone()),
            DictionarySpec::TaylorRemainder => Ok(model.dictionary.taylor_remainder()?.1),
            DictionarySpec::Linear => BasisLibrary::linear(n),
            DictionarySpec::Monomials { degree, min_degree } => {
                if *min_degree < 2 || min_degree > degree {
                    return Err(Error::input(
                        "monomial degrees must satisfy 2 <= min_degree <= degree",
                    ));
                }
                let mut q: Vec<BasisFunction> = Vec::new();
                for d in *min_degree..=*degree {
                    for f in monomials_up_to_degree(n, d)?.nonlinear() {
                        let BasisFunction::Monomial { exponents } = f else {
                            continue;
                        };
                        let total: u32 = exponents.iter().sum();
                        if total >= *min_degree && !q.contains(f) {
                            q.push(f.clone());
                        }
                    }
                }
                BasisLibrary::new(n, 0, q)
            }
            DictionarySpec::Functions { functions } => BasisLibrary::new(n, 0, functions.clone()),
        }
    }

    /// Canonical JSON of the parsed configuration, used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 3
        [model]
        name = "cubic"
        [dictionary]
        kind = "monomials"
        degree = 3
        [synthesis]
        mode = "exact"
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.experiment.horizon, 10);
        assert_eq!(c.synthesis.norm, MatrixNorm::Spectral);
        let m = c.build_model().unwrap();
        let lib = c.build_library(&m).unwrap();
        assert_eq!(lib.dim(), 9);
        assert_eq!(c.experiment_config().seed, 3);
    }

    #[test]
    fn degree_window_keeps_the_ordering_of_full_dictionaries() {
        let text = MINIMAL.replace("degree = 3", "degree = 4\nmin_degree = 2");
        let c = RunConfig::parse(&text).unwrap();
        let lib = c.build_library(&c.build_model().unwrap()).unwrap();
        let labels = lib.labels();
        assert_eq!(lib.nonlinear_dim(), 12);
        assert_eq!(&labels[2..5], ["x1^2", "x2^2", "x1*x2"]);
        assert_eq!(labels[9], "x1^4");
    }

    #[test]
    fn missing_mode_fields_are_rejected() {
        let robust = MINIMAL.replace("mode = \"exact\"", "mode = \"robust\"");
        assert!(RunConfig::parse(&robust).is_err());
        let unknown = format!("{MINIMAL}\nbogus = 1");
        assert!(RunConfig::parse(&unknown).is_err());
        let pi = format!("{MINIMAL}\n[certify]\nkind = \"pi\"\ndelta = 0.1");
        assert!(RunConfig::parse(&pi).is_err());
    }
}
