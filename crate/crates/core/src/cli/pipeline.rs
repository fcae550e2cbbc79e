use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{CertifyKind, DecrementKind, ModeName, NoiseLaw, RunConfig};
use crate::basis::{BasisLibrary, DataMatrices, Trajectory};
use crate::certify::{
    certify_pi_neglected, certify_rpi, estimate_roa, prob_bound_bounded, prob_bound_gaussian,
    stability_probability, DecrementModel, GridSpec, ProbabilityBound, RegionEstimate,
};
use crate::error::{Error, Result};
use crate::simlab::{simulate_repeated, SystemModel};
use crate::synth::{
    synth_ct, synth_exact, synth_extended, synth_min_norm, synth_normal_form, synth_robust,
    synth_sparse, verify_given_k, ProbabilityClaim, RobustParams, SolverOptions, SynthOptions,
    SynthesisResult,
};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Simulated or loaded experiments together with the data matrices built
/// from them (averaged when there are several).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub data: DataMatrices,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// "roa", "rpi", "pi", or "empty".
    pub kind: String,
    pub gamma: Option<f64>,
    pub interval: Option<[f64; 2]>,
    pub region: RegionEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<ProbabilityBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_probability: Option<ProbabilityClaim>,
    pub provenance: BTreeMap<String, String>,
}

impl Certificate {
    fn new(region: RegionEstimate) -> Self {
        let kind = if region.empty {
            "empty".to_string()
        } else {
            serde_json::to_value(region.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        };
        Self {
            gamma: (!region.empty).then_some(region.gamma),
            interval: region.interval,
            kind,
            region,
            probability: None,
            stability_probability: None,
            provenance: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.kind == "empty"
    }
}

/// Entrywise mean of repeated experiments with equal shapes.
pub fn average_trajectories(runs: &[Trajectory]) -> Result<Trajectory> {
    let first = runs
        .first()
        .ok_or_else(|| Error::input("no trajectories to average"))?;
    let k = runs.len() as f64;
    let mean = |f: &dyn Fn(&Trajectory) -> Option<DMatrix<f64>>| -> Result<Option<DMatrix<f64>>> {
        let Some(mut acc) = f(first) else {
            return Ok(None);
        };
        for r in &runs[1..] {
            match f(r) {
                Some(m) if m.shape() == acc.shape() => acc += m,
                Some(_) => return Err(Error::input("trajectories to average differ in shape")),
                None => return Ok(None),
            }
        }
        Ok(Some(acc / k))
    };
    let mut avg = Trajectory::new(
        mean(&|t| Some(t.states.clone()))?.expect("states present"),
        mean(&|t| Some(t.inputs.clone()))?.expect("inputs present"),
    )?;
    avg.derivatives = mean(&|t| t.derivatives.clone())?;
    avg.disturbances = mean(&|t| t.disturbances.clone())?;
    avg.outputs = mean(&|t| {
        t.outputs
            .as_ref()
            .map(|y| DMatrix::from_row_slice(1, y.len(), y))
    })?
    .map(|m| m.iter().copied().collect());
    avg.validate()?;
    Ok(avg)
}

fn csv_bytes(t: &Trajectory) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    Ok(buf)
}

/// One configured pipeline: plant, controller dictionary and solver
/// settings resolved from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub config: RunConfig,
    pub model: SystemModel,
    pub library: BasisLibrary,
    pub solver: SolverOptions,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let model = config.build_model()?;
        let library = config.build_library(&model)?;
        config.disturbance.validate(model.disturbance_dim())?;
        Ok(Self {
            config,
            model,
            library,
            solver: SolverOptions::from_env()?,
        })
    }

    pub fn config_sha256(&self) -> String {
        sha256_hex(self.config.canonical_json().as_bytes())
    }

    pub fn simulate(&self) -> Result<Vec<Trajectory>> {
        simulate_repeated(
            &self.model,
            &self.config.disturbance,
            &self.config.experiment_config(),
        )
    }

    pub fn dataset(&self, trajectories: Vec<Trajectory>) -> Result<Dataset> {
        if trajectories.is_empty() {
            return Err(Error::input("no experiment data"));
        }
        let mode = self.config.synthesis.mode.data_mode();
        let mut hasher = Sha256::new();
        let mut sets = Vec::with_capacity(trajectories.len());
        for t in &trajectories {
            hasher.update(csv_bytes(t)?);
            sets.push(DataMatrices::build(t, &self.library, mode)?);
        }
        let data = if sets.len() == 1 {
            sets.pop().unwrap()
        } else {
            DataMatrices::average(&sets)?
        };
        Ok(Dataset {
            trajectories,
            data,
            sha256: hex::encode(hasher.finalize()),
        })
    }

    pub fn load_dataset(&self, paths: &[PathBuf]) -> Result<Dataset> {
        let runs = paths
            .iter()
            .map(|p| Trajectory::load(p))
            .collect::<Result<Vec<_>>>()?;
        self.dataset(runs)
    }

    /// Probability bound for the averaged disturbance record, if configured.
    pub fn probability(&self) -> Result<Option<ProbabilityBound>> {
        let Some(p) = &self.config.probability else {
            return Ok(None);
        };
        let e = &self.config.experiment;
        let b = match p.law {
            NoiseLaw::Bounded => prob_bound_bounded(
                p.delta.unwrap_or_default(),
                p.sigma_norm.unwrap_or_default(),
                e.horizon,
                e.repetitions,
                p.mu,
                p.channels,
            )?,
            NoiseLaw::Gaussian => prob_bound_gaussian(
                p.covariance.as_ref().expect("validated"),
                e.horizon,
                e.repetitions,
                p.mu,
            )?,
        };
        Ok(Some(b))
    }

    pub fn robust_params(&self) -> Result<RobustParams> {
        let r = self
            .config
            .robust
            .as_ref()
            .ok_or_else(|| Error::input("robust mode needs a [robust] section"))?;
        let n = self.library.coord_dim();
        let e = r.e.clone().unwrap_or_else(|| self.model.e.clone());
        let s = e.ncols();
        if s == 0 {
            return Err(Error::input(
                "robust design needs a disturbance matrix E with at least one column",
            ));
        }
        let omega = r.omega.clone().unwrap_or_else(|| DMatrix::identity(n, n));
        let delta = if let Some(d) = r.delta {
            RobustParams::from_pointwise_bound(d, self.config.experiment.horizon, s, omega.clone())
                .delta
        } else if let Some(m) = &r.record_bound {
            m.clone()
        } else {
            let b = self.probability()?.expect("validated");
            DMatrix::identity(s, s) * b.bound
        };
        Ok(RobustParams {
            delta,
            omega,
            lambda_p: r.lambda_p,
            lambda_g: r.lambda_g,
            e: Some(e),
        })
    }

    pub fn synthesize(&self, ds: &Dataset) -> Result<SynthesisResult> {
        let syn = &self.config.synthesis;
        let opts = SynthOptions {
            solver: self.solver,
            norm: syn.norm,
        };
        let d = &ds.data;
        let result = match syn.mode {
            ModeName::Exact => synth_exact(d, &opts)?,
            ModeName::MinNorm => synth_min_norm(d, &opts)?,
            ModeName::Sparse => synth_sparse(d, syn.regularize_linear, &opts)?,
            ModeName::Continuous => synth_ct(d, &opts)?,
            ModeName::Extended => synth_extended(d, &opts)?,
            ModeName::NormalForm => synth_normal_form(d, &opts)?,
            ModeName::Verify => verify_given_k(d, syn.gain.as_ref(), &opts)?,
            ModeName::Robust => {
                let r = synth_robust(d, &self.robust_params()?, &opts)?;
                match self.probability()? {
                    Some(b)
                        if self
                            .config
                            .robust
                            .as_ref()
                            .is_some_and(|r| r.use_probability_bound) =>
                    {
                        stability_probability(r, b.probability.clamp(0.0, 1.0))?
                    }
                    _ => r,
                }
            }
        };
        let mut result = result.with_library(&self.library);
        result
            .provenance
            .insert("config_sha256".into(), self.config_sha256());
        result
            .provenance
            .insert("dataset_sha256".into(), ds.sha256.clone());
        Ok(result)
    }

    pub fn decrement_model(&self, result: &SynthesisResult) -> Result<DecrementModel> {
        let c = self
            .config
            .certify
            .as_ref()
            .ok_or_else(|| Error::input("no [certify] section in the config"))?;
        let kind = c.decrement.unwrap_or(if result.robust.is_some() {
            DecrementKind::Noisy
        } else {
            DecrementKind::Nominal
        });
        match kind {
            DecrementKind::Nominal => DecrementModel::nominal(result, &self.library),
            DecrementKind::Noisy => DecrementModel::noisy(result, &self.library),
        }
    }

    /// Runs the configured certificate. `ds` supplies the experiment states
    /// checked against the region of a PI certificate.
    pub fn certify(&self, result: &SynthesisResult, ds: Option<&Dataset>) -> Result<Certificate> {
        let c = self
            .config
            .certify
            .as_ref()
            .ok_or_else(|| Error::input("no [certify] section in the config"))?;
        let model = self.decrement_model(result)?;
        let grid = match &c.grid {
            Some(g) => g.clone(),
            None => GridSpec::default_for(model.dim())?,
        };
        let bound = c.disturbance_bound()?;
        let region = match c.kind {
            CertifyKind::Roa => estimate_roa(&model, bound.as_ref(), &grid)?,
            CertifyKind::Rpi => certify_rpi(&model, bound.as_ref().expect("validated"), &grid)?,
            CertifyKind::Pi => {
                let q = c.region.as_ref().expect("validated");
                let states = ds.map(|d| &d.data.x0);
                certify_pi_neglected(
                    &model,
                    bound.as_ref().expect("validated"),
                    (&q.lower, &q.upper),
                    states,
                    &grid,
                )?
            }
        };
        let mut cert = Certificate::new(region);
        cert.probability = self.probability()?;
        cert.stability_probability = result.stability_probability.clone();
        cert.provenance
            .insert("config_sha256".into(), self.config_sha256());
        let result_json = serde_json::to_string(result)?;
        cert.provenance
            .insert("result_sha256".into(), sha256_hex(result_json.as_bytes()));
        if let Some(d) = ds {
            cert.provenance
                .insert("dataset_sha256".into(), d.sha256.clone());
        }
        Ok(cert)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_result(path: &Path) -> Result<SynthesisResult> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read result {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Files written by a simulation run.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationManifest {
    pub model: String,
    pub seed: u64,
    pub horizon: usize,
    pub repetitions: usize,
    pub config_sha256: String,
    pub files: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub averaged: Option<String>,
}

/// Writes each experiment as CSV, the entrywise average when there are
/// several, and a manifest with content hashes.
pub fn write_simulation(
    p: &Pipeline,
    runs: &[Trajectory],
    dir: &Path,
) -> Result<SimulationManifest> {
    fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    for (i, t) in runs.iter().enumerate() {
        let name = if runs.len() == 1 {
            "trajectory.csv".to_string()
        } else {
            format!("run_{i:04}.csv")
        };
        let bytes = csv_bytes(t)?;
        fs::write(dir.join(&name), &bytes)?;
        files.insert(name, sha256_hex(&bytes));
    }
    let averaged = if runs.len() > 1 {
        let bytes = csv_bytes(&average_trajectories(runs)?)?;
        fs::write(dir.join("averaged.csv"), &bytes)?;
        files.insert("averaged.csv".into(), sha256_hex(&bytes));
        Some("averaged.csv".to_string())
    } else {
        None
    };
    let m = SimulationManifest {
        model: p.model.name.clone(),
        seed: p.config.seed,
        horizon: p.config.experiment.horizon,
        repetitions: runs.len(),
        config_sha256: p.config_sha256(),
        files,
        averaged,
    };
    write_json(&dir.join("manifest.json"), &m)?;
    Ok(m)
}

/// Writes `certificate.json` and, when the grid evidence is available,
/// `region.csv`.
pub fn write_certificate(cert: &Certificate, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("certificate.json"), cert)?;
    if !cert.region.evidence.is_empty() {
        cert.region.save_csv(&dir.join("region.csv"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_is_entrywise() {
        let a = Trajectory::new(
            DMatrix::from_element(1, 3, 1.0),
            DMatrix::from_element(1, 2, 2.0),
        )
        .unwrap();
        let b = Trajectory::new(
            DMatrix::from_element(1, 3, 3.0),
            DMatrix::from_element(1, 2, 0.0),
        )
        .unwrap();
        let m = average_trajectories(&[a, b]).unwrap();
        assert_eq!(m.states, DMatrix::from_element(1, 3, 2.0));
        assert_eq!(m.inputs, DMatrix::from_element(1, 2, 1.0));
        assert!(m.disturbances.is_none());
    }

    #[test]
    fn hashes_are_lowercase_hex() {
        let h = sha256_hex(b"abc");
        assert_eq!(
            h,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
