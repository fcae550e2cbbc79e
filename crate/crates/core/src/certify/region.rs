use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::decrement::{DecrementModel, DisturbanceBound, QuadLyapunov};
use super::grid::{is_origin, GridSpec};
use crate::error::{Error, Result};

pub const BISECTION_REL_TOL: f64 = 1e-3;
pub const BISECTION_MAX_ITER: usize = 40;
/// Reported gamma when the certified interval is open on the right.
const OPEN_END_SHRINK: f64 = 1e-9;
const MAX_REPORTED_VIOLATIONS: usize = 20;

pub const ESTIMATE_NOTE: &str =
    "grid-certified estimate: the defining inequalities hold at every grid point, \
not proven between grid points";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    /// Region of attraction from a decrement that is negative on the set.
    Roa,
    /// Positively invariant set for a disturbance bounded on a region Q.
    Pi,
    /// Robustly positively invariant set.
    Rpi,
}

/// Containment of the sublevel set in the region where the disturbance
/// bound is asserted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentRecord {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Largest gamma whose sublevel set stays inside the box.
    pub gamma_limit: f64,
    pub contained: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointValue {
    pub v: f64,
    pub decrement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionEstimate {
    pub kind: RegionKind,
    /// No positive gamma could be certified on the grid.
    pub empty: bool,
    pub gamma: f64,
    /// Widest contiguous range of certified levels; `gamma` is its top.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    pub lyapunov: QuadLyapunov,
    pub grid: GridSpec,
    /// max of V + decrement over the grid points of Z = R_gamma minus X.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_over_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub containment: Option<ContainmentRecord>,
    /// Largest gamma keeping the sublevel set inside the grid box.
    pub gamma_box: f64,
    /// Grid points where the decrement is negative (ROA) or nonpositive.
    pub decrease_points: usize,
    pub region_points: usize,
    /// Grid area (volume) of the certified sublevel set.
    pub area: f64,
    pub note: String,
    #[serde(skip)]
    pub evidence: Vec<PointValue>,
}

impl RegionEstimate {
    fn in_decrease_set(&self, p: &PointValue) -> bool {
        match self.kind {
            RegionKind::Roa => p.decrement < 0.0,
            _ => p.decrement <= 0.0,
        }
    }

    /// Re-checks the defining inequality of `gamma` on the stored evidence.
    pub fn certifies(&self, gamma: f64) -> bool {
        if gamma <= 0.0 || gamma > self.gamma_box || self.evidence.is_empty() {
            return false;
        }
        if let Some(c) = &self.containment {
            if gamma > c.gamma_limit {
                return false;
            }
        }
        match self.kind {
            RegionKind::Roa => {
                self.evidence.iter().enumerate().all(|(k, p)| {
                    p.v > gamma || p.decrement < 0.0 || is_origin(&self.grid.point(k))
                })
            }
            _ => self
                .evidence
                .iter()
                .filter(|p| p.v <= gamma && p.decrement > 0.0)
                .all(|p| p.v + p.decrement <= gamma),
        }
    }

    /// Writes one row per grid point: coordinates, V, decrement and the
    /// membership flags of X (decrease set), R (sublevel set) and Z.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        if self.evidence.len() != self.grid.total() {
            return Err(Error::input("region estimate carries no grid evidence"));
        }
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.grid.dim()).map(|i| format!("x{i}")).collect();
        header.extend(["V", "decrement", "in_X", "in_R", "in_Z"].map(String::from));
        out.write_record(&header)?;
        let robust = self.kind != RegionKind::Roa;
        for (k, p) in self.evidence.iter().enumerate() {
            let in_x = self.in_decrease_set(p);
            let in_r = !self.empty && p.v <= self.gamma;
            let in_z = robust && in_r && !in_x;
            let mut row: Vec<String> = self
                .grid
                .point(k)
                .iter()
                .map(|v| format!("{v:e}"))
                .collect();
            row.push(format!("{:e}", p.v));
            row.push(format!("{:e}", p.decrement));
            row.extend([in_x, in_r, in_z].map(|b| u8::from(b).to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }
}

fn evaluate(
    model: &DecrementModel,
    bound: Option<&DisturbanceBound>,
    grid: &GridSpec,
) -> Result<Vec<PointValue>> {
    grid.validate()?;
    if grid.dim() != model.dim() {
        return Err(Error::input(format!(
            "grid has dimension {} but the closed loop has {} coordinates",
            grid.dim(),
            model.dim()
        )));
    }
    if let Some(b) = bound {
        b.validate()?;
    }
    let values = grid.evaluate(|x| PointValue {
        v: model.lyapunov.value(x),
        decrement: model.bound(x, bound),
    });
    if values.iter().any(|p| !p.decrement.is_finite()) {
        return Err(Error::input(
            "decrement is not finite on the grid; shrink the box",
        ));
    }
    Ok(values)
}

fn finish(
    kind: RegionKind,
    model: &DecrementModel,
    grid: &GridSpec,
    evidence: Vec<PointValue>,
    gamma: Option<f64>,
    gamma_box: f64,
) -> RegionEstimate {
    let mut r = RegionEstimate {
        kind,
        empty: gamma.is_none(),
        gamma: gamma.unwrap_or(0.0),
        interval: None,
        lyapunov: model.lyapunov.clone(),
        grid: grid.clone(),
        max_over_z: None,
        containment: None,
        gamma_box,
        decrease_points: 0,
        region_points: 0,
        area: 0.0,
        note: ESTIMATE_NOTE.into(),
        evidence,
    };
    r.decrease_points = r.evidence.iter().filter(|p| r.in_decrease_set(p)).count();
    if !r.empty {
        r.region_points = r.evidence.iter().filter(|p| p.v <= r.gamma).count();
        r.area = r.region_points as f64 * grid.cell_volume();
        if kind != RegionKind::Roa {
            r.max_over_z = r
                .evidence
                .iter()
                .filter(|p| p.v <= r.gamma && p.decrement > 0.0)
                .map(|p| p.v + p.decrement)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        }
    }
    r
}

/// Largest gamma, up to the bisection tolerance, such that the decrement is
/// negative at every nonzero grid point of {V <= gamma}.
///
/// With a nominal model the decrement is h; with a noisy model it is the
/// data-based bound l, plus g(x, delta(x)) when a disturbance bound is given.
pub fn estimate_roa(
    model: &DecrementModel,
    bound: Option<&DisturbanceBound>,
    grid: &GridSpec,
) -> Result<RegionEstimate> {
    let evidence = evaluate(model, bound, grid)?;
    let gamma_box = model.lyapunov.gamma_inside_box(&grid.half_widths());
    let first_violation = evidence
        .iter()
        .enumerate()
        .filter(|(k, p)| p.decrement >= 0.0 && !is_origin(&grid.point(*k)))
        .map(|(_, p)| p.v)
        .fold(f64::INFINITY, f64::min);
    let ok = |g: f64| g <= gamma_box && g < first_violation;
    let gamma = if ok(gamma_box) {
        Some(gamma_box)
    } else {
        let (mut lo, mut hi) = (0.0, gamma_box);
        for _ in 0..BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if lo > 0.0 && hi - lo <= BISECTION_REL_TOL * hi {
                break;
            }
        }
        (lo > 0.0).then_some(lo)
    };
    Ok(finish(
        RegionKind::Roa,
        model,
        grid,
        evidence,
        gamma,
        gamma_box,
    ))
}

/// Certified levels [lo, hi] with an open or closed right end.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Segment {
    lo: f64,
    hi: f64,
    hi_closed: bool,
}

impl Segment {
    fn top(&self) -> f64 {
        if self.hi_closed {
            self.hi
        } else {
            (self.hi * (1.0 - OPEN_END_SHRINK)).max(self.lo)
        }
    }
}

/// For a level gamma let Z be the grid points with V <= gamma outside the
/// decrease set. gamma is certified when V + decrement <= gamma on Z. Sorting
/// Z-candidates by V turns the condition into a sweep over breakpoints.
fn certified_segments(evidence: &[PointValue], cap: f64) -> Vec<Segment> {
    let mut outside: Vec<PointValue> = evidence
        .iter()
        .copied()
        .filter(|p| p.decrement > 0.0)
        .collect();
    outside.sort_by(|a, b| a.v.total_cmp(&b.v));
    let mut raw = Vec::new();
    let first = outside.first().map_or(f64::INFINITY, |p| p.v);
    if first > 0.0 {
        raw.push((0.0, first));
    }
    let mut running = f64::NEG_INFINITY;
    for (k, p) in outside.iter().enumerate() {
        running = running.max(p.v + p.decrement);
        let next = outside.get(k + 1).map_or(f64::INFINITY, |q| q.v);
        let lo = p.v.max(running);
        if lo < next {
            raw.push((lo, next));
        }
    }
    // Segments never touch: a Z-candidate entering at level v needs
    // v + decrement <= gamma, which fails at gamma = v.
    let mut segments = Vec::new();
    for (lo, hi) in raw {
        if lo > cap {
            break;
        }
        let (hi, hi_closed) = if hi > cap { (cap, true) } else { (hi, false) };
        segments.push(Segment { lo, hi, hi_closed });
    }
    segments.retain(|s| s.top() > 0.0);
    segments
}

/// The sweep can certify thin slivers of levels where the grid misses the
/// boundary of the decrease set; the widest segment is the certificate.
fn widest(segments: &[Segment]) -> Option<Segment> {
    segments
        .iter()
        .copied()
        .fold(None, |best: Option<Segment>, s| match best {
            Some(b) if b.top() - b.lo >= s.top() - s.lo => Some(b),
            _ => Some(s),
        })
}

fn robust_estimate(
    kind: RegionKind,
    model: &DecrementModel,
    evidence: Vec<PointValue>,
    grid: &GridSpec,
    cap: f64,
    gamma_box: f64,
) -> RegionEstimate {
    let top = widest(&certified_segments(&evidence, cap));
    let mut r = finish(kind, model, grid, evidence, top.map(|s| s.top()), gamma_box);
    r.interval = top.map(|s| [s.lo, s.top()]);
    r
}

/// Robustly positively invariant sublevel set for disturbances bounded by
/// `bound`, using the decrement bound l + g.
pub fn certify_rpi(
    model: &DecrementModel,
    bound: &DisturbanceBound,
    grid: &GridSpec,
) -> Result<RegionEstimate> {
    if !model.is_noisy() {
        return Err(Error::input(
            "robust invariance needs a noisy decrement model",
        ));
    }
    let evidence = evaluate(model, Some(bound), grid)?;
    let gamma_box = model.lyapunov.gamma_inside_box(&grid.half_widths());
    Ok(robust_estimate(
        RegionKind::Rpi,
        model,
        evidence,
        grid,
        gamma_box,
        gamma_box,
    ))
}

/// Positively invariant sublevel set for a neglected nonlinearity that is
/// bounded by `bound` only on the box `region`.
///
/// The experiment states must lie in the box, and the certified sublevel set
/// must fit inside it; otherwise the certificate is refused.
pub fn certify_pi_neglected(
    model: &DecrementModel,
    bound: &DisturbanceBound,
    region: (&[f64], &[f64]),
    experiment_states: Option<&DMatrix<f64>>,
    grid: &GridSpec,
) -> Result<RegionEstimate> {
    if !model.is_noisy() {
        return Err(Error::input(
            "invariance under a neglected nonlinearity needs a noisy decrement model",
        ));
    }
    let (lower, upper) = region;
    let n = model.dim();
    if lower.len() != n
        || upper.len() != n
        || lower
            .iter()
            .zip(upper)
            .any(|(l, u)| !(*l <= 0.0 && *u >= 0.0 && l < u))
    {
        return Err(Error::input(
            "region Q must be a box around the origin in state coordinates",
        ));
    }
    let inside = |x: &[f64]| {
        x.iter()
            .enumerate()
            .all(|(i, v)| lower[i] <= *v && *v <= upper[i])
    };
    if let Some(states) = experiment_states {
        if states.nrows() != n {
            return Err(Error::input("experiment states have the wrong dimension"));
        }
        for (t, col) in states.column_iter().enumerate() {
            if !inside(col.as_slice()) {
                return Err(Error::Refused(format!(
                    "experiment state at step {t} ({:?}) lies outside the region where the bound is asserted",
                    col.as_slice()
                )));
            }
        }
    }
    let evidence = evaluate(model, Some(bound), grid)?;
    let gamma_box = model.lyapunov.gamma_inside_box(&grid.half_widths());
    let half: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| (-l).min(*u)).collect();
    let gamma_limit = model.lyapunov.gamma_inside_box(&half);

    let unrestricted = certified_segments(&evidence, gamma_box);
    let restricted = certified_segments(&evidence, gamma_box.min(gamma_limit));
    if restricted.is_empty() {
        if let Some(first) = unrestricted.first() {
            let level = first.top();
            let outside: Vec<Vec<f64>> = evidence
                .iter()
                .enumerate()
                .filter(|(_, p)| p.v <= level)
                .map(|(k, _)| grid.point(k))
                .filter(|x| !inside(x))
                .take(MAX_REPORTED_VIOLATIONS)
                .collect();
            return Err(Error::Refused(format!(
                "smallest certified sublevel set (gamma = {level:.4e}) leaves Q, which only admits gamma <= {gamma_limit:.4e}; \
                 grid points outside Q: {outside:?}"
            )));
        }
    }
    let mut r = robust_estimate(
        RegionKind::Pi,
        model,
        evidence,
        grid,
        gamma_box.min(gamma_limit),
        gamma_box,
    );
    r.containment = Some(ContainmentRecord {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        gamma_limit,
        contained: r.empty || r.gamma <= gamma_limit,
    });
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: f64, decrement: f64) -> PointValue {
        PointValue { v, decrement }
    }

    #[test]
    fn segments_follow_running_maximum() {
        // The origin is outside X with V + dec = 0.01; the point at V = 1
        // raises the running maximum to 1.5.
        let ev = vec![
            pv(0.0, 0.01),
            pv(0.2, -1.0),
            pv(0.5, -0.2),
            pv(1.0, 0.5),
            pv(3.0, 1.0),
        ];
        let s = certified_segments(&ev, 10.0);
        let ends: Vec<(f64, f64, bool)> = s.iter().map(|s| (s.lo, s.hi, s.hi_closed)).collect();
        assert_eq!(
            ends,
            vec![(0.01, 1.0, false), (1.5, 3.0, false), (4.0, 10.0, true)]
        );
        let capped = certified_segments(&ev, 0.7);
        assert_eq!(
            capped,
            vec![Segment {
                lo: 0.01,
                hi: 0.7,
                hi_closed: true
            }]
        );
    }

    #[test]
    fn decrease_everywhere_certifies_from_zero() {
        let ev = vec![pv(0.0, 0.0), pv(0.5, -0.1), pv(2.0, -1.0)];
        let s = certified_segments(&ev, 1.0);
        assert_eq!(
            s,
            vec![Segment {
                lo: 0.0,
                hi: 1.0,
                hi_closed: true
            }]
        );
    }

    #[test]
    fn empty_when_origin_term_exceeds_cap() {
        let ev = vec![pv(0.0, 2.0), pv(0.5, -1.0)];
        assert!(certified_segments(&ev, 1.0).is_empty());
    }
}
