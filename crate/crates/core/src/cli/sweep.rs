use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{NoiseLaw, RunConfig};
use super::pipeline::Pipeline;
use crate::error::{Error, Result};
use crate::simlab::DisturbanceSpec;

/// Outcome of one pipeline run in a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub delta: f64,
    pub repetitions: usize,
    /// ok, empty, infeasible, solver_failure, diverged or error.
    pub status: String,
    pub exit_code: i32,
    pub objective: Option<f64>,
    pub gamma: Option<f64>,
    pub area: Option<f64>,
}

/// Rewrites every disturbance bound in `cfg` to `delta`, keeping the
/// uniform law's covariance consistent.
pub fn with_delta(cfg: &mut RunConfig, delta: f64) {
    cfg.disturbance = DisturbanceSpec::Uniform { delta };
    if let Some(r) = cfg.robust.as_mut() {
        if r.delta.is_some() {
            r.delta = Some(delta);
        }
    }
    if let Some(c) = cfg.certify.as_mut() {
        if c.delta.is_some() {
            c.delta = Some(delta);
        }
    }
    if let Some(p) = cfg.probability.as_mut() {
        if p.law == NoiseLaw::Bounded {
            p.delta = Some(delta);
            p.sigma_norm = Some(delta * delta / (3.0 * p.channels as f64));
        }
    }
}

fn status_of(e: &Error) -> &'static str {
    match e {
        Error::Infeasible(_) => "infeasible",
        Error::Solver(_) => "solver_failure",
        Error::Divergence { .. } => "diverged",
        _ => "error",
    }
}

fn run_one(cfg: RunConfig, delta: f64) -> SweepRow {
    let seed = cfg.seed;
    let repetitions = cfg.experiment.repetitions;
    let mut row = SweepRow {
        seed,
        delta,
        repetitions,
        status: "ok".into(),
        exit_code: 0,
        objective: None,
        gamma: None,
        area: None,
    };
    let outcome = (|| -> Result<()> {
        let p = Pipeline::new(cfg)?;
        let ds = p.dataset(p.simulate()?)?;
        let r = p.synthesize(&ds)?;
        row.objective = Some(r.objective);
        if p.config.certify.is_some() {
            let c = p.certify(&r, Some(&ds))?;
            row.area = Some(c.region.area);
            row.gamma = c.gamma;
            if c.is_empty() {
                row.status = "empty".into();
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.status = status_of(&e).into();
        row.exit_code = e.exit_code();
    }
    row
}

/// Runs the pipeline for every combination of seed, disturbance bound and
/// repetition count. Empty `deltas` or `repetitions` keep the config's value.
pub fn run_sweep(
    cfg: &RunConfig,
    seeds: &[u64],
    deltas: &[f64],
    repetitions: &[usize],
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let deltas: Vec<Option<f64>> = if deltas.is_empty() {
        vec![None]
    } else {
        deltas.iter().copied().map(Some).collect()
    };
    let reps: Vec<usize> = if repetitions.is_empty() {
        vec![cfg.experiment.repetitions]
    } else {
        repetitions.to_vec()
    };
    let mut jobs = Vec::new();
    for &d in &deltas {
        for &n in &reps {
            for &s in seeds {
                let mut c = cfg.clone();
                c.seed = s;
                c.experiment.repetitions = n;
                if let Some(d) = d {
                    with_delta(&mut c, d);
                }
                let shown = d.unwrap_or_else(|| c.disturbance.bound());
                jobs.push((c, shown));
            }
        }
    }
    Ok(jobs.into_par_iter().map(|(c, d)| run_one(c, d)).collect())
}

pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "delta",
        "repetitions",
        "status",
        "exit_code",
        "objective",
        "gamma",
        "area",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            format!("{:e}", r.delta),
            r.repetitions.to_string(),
            r.status.clone(),
            r.exit_code.to_string(),
            opt(r.objective),
            opt(r.gamma),
            opt(r.area),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Median of the values, with failed runs counted as zero.
pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn summary(rows: &[SweepRow]) -> String {
    let mut groups: BTreeMap<(u64, usize), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.delta.to_bits(), r.repetitions))
            .or_default()
            .push(r);
    }
    let mut out = String::from("delta        N     ok/runs  median area\n");
    for ((d, n), g) in groups {
        let ok = g.iter().filter(|r| r.status == "ok").count();
        let m = median(g.iter().map(|r| r.area.unwrap_or(0.0)).collect());
        let _ = writeln!(
            out,
            "{:<12.4e} {:<5} {:>3}/{:<4} {:.4e}",
            f64::from_bits(d),
            n,
            ok,
            g.len(),
            m
        );
    }
    out
}
