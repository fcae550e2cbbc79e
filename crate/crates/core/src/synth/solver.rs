//! Clarabel back end for [`ConicProgram`].

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
    SupportedConeT::{NonnegativeConeT, PSDTriangleConeT, SecondOrderConeT, ZeroConeT},
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::program::{ConicProgram, LinExpr};
use crate::error::{Error, Result};
use crate::linalg::min_sym_eigenvalue;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const TOL_ENV: &str = "DDNC_SOLVER_TOL";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: 200,
            verbose: false,
        }
    }
}

impl SolverOptions {
    /// Defaults, with the tolerance taken from `DDNC_SOLVER_TOL` when set.
    pub fn from_env() -> Result<Self> {
        let mut o = Self::default();
        if let Ok(v) = std::env::var(TOL_ENV) {
            let tol: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("{TOL_ENV} is not a number: {v:?}")))?;
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::input(format!("{TOL_ENV} must lie in (0, 1)")));
            }
            o.tol = tol;
        }
        Ok(o)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Reduced-accuracy optimum.
    NearOptimal,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: u32,
    /// Largest violation of any equality, after polishing.
    pub equality_residual: f64,
    /// Smallest of `lambda_min(M) - margin` over the LMIs.
    pub lmi_slack: f64,
    pub warnings: Vec<String>,
}

/// Upper-triangle, column-major position of `(i, j)` with `i <= j`.
pub(crate) fn svec_index(i: usize, j: usize) -> usize {
    j * (j + 1) / 2 + i
}

struct Reduced {
    /// Indices of a linearly independent subset of the equality rows.
    rows: Vec<usize>,
    /// Orthonormal basis `q` of the row space with right-hand sides `beta`,
    /// so that the equality set is `{x : q x = beta}`.
    q: Vec<DVector<f64>>,
    beta: Vec<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Reduced {
    /// Orthogonal projection onto the equality set.
    fn project(&self, x: &mut DVector<f64>) {
        for _ in 0..2 {
            for (q, beta) in self.q.iter().zip(&self.beta) {
                let r = q.dot(x) - beta;
                x.axpy(-r, q, 1.0);
            }
        }
    }
}

fn dense_rows(exprs: &[&LinExpr], nvars: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::zeros(exprs.len(), nvars);
    let mut b = DVector::zeros(exprs.len());
    for (r, e) in exprs.iter().enumerate() {
        for &(i, c) in &e.terms {
            a[(r, i)] += c;
        }
        b[r] = -e.constant;
    }
    (a, b)
}

/// Row dependence threshold, relative to the row norm.
const DEPENDENT_ROW_TOL: f64 = 1e-9;
/// Allowed inconsistency of a dependent row, relative to its scale.
const CONSISTENCY_TOL: f64 = 1e-7;

/// Keep a linearly independent subset of the equality rows, checking that
/// every dependent row agrees with the others. Gram-Schmidt with one
/// reorthogonalization pass, in row order.
fn presolve_equalities(p: &ConicProgram) -> Result<Option<Reduced>> {
    let exprs: Vec<&LinExpr> = p.equalities.iter().map(|(_, e)| e).collect();
    if exprs.is_empty() {
        return Ok(None);
    }
    let (a, b) = dense_rows(&exprs, p.nvars());
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut rows = Vec::new();
    for r in 0..a.nrows() {
        let mut v = a.row(r).transpose();
        let norm = v.norm();
        let mut rhs = b[r];
        let mut implied_scale = 0.0_f64;
        for _ in 0..2 {
            for (qi, bi) in q.iter().zip(&beta) {
                let d = qi.dot(&v);
                v.axpy(-d, qi, 1.0);
                rhs -= d * bi;
                implied_scale += (d * bi).abs();
            }
        }
        let rn = v.norm();
        if norm > 0.0 && rn > DEPENDENT_ROW_TOL * norm {
            q.push(v / rn);
            beta.push(rhs / rn);
            rows.push(r);
        } else if rhs.abs() > CONSISTENCY_TOL * implied_scale.max(b[r].abs()).max(1.0) {
            let what = if norm == 0.0 {
                "has no free variables and"
            } else {
                "depends on earlier rows but"
            };
            return Err(Error::Infeasible(format!(
                "equality {} {what} is violated by {:.3e}",
                p.equalities[r].0, rhs
            )));
        }
    }
    Ok(Some(Reduced {
        rows,
        q,
        beta,
        a,
        b,
    }))
}

struct Triplets {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Triplets {
    /// Append a row encoding `s = b - a x` for the cone slack `s = expr`.
    fn push(&mut self, e: &LinExpr, scale: f64) {
        let r = self.b.len();
        for &(j, c) in &e.terms {
            if c != 0.0 {
                self.i.push(r);
                self.j.push(j);
                self.v.push(-c * scale);
            }
        }
        self.b.push(e.constant * scale);
    }
}

pub fn solve(p: &ConicProgram, opts: &SolverOptions) -> Result<Solution> {
    let n = p.nvars();
    let reduced = presolve_equalities(p)?;
    let mut t = Triplets {
        i: Vec::new(),
        j: Vec::new(),
        v: Vec::new(),
        b: Vec::new(),
    };
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    if let Some(red) = &reduced {
        for &r in &red.rows {
            t.push(&p.equalities[r].1, 1.0);
        }
        if !red.rows.is_empty() {
            cones.push(ZeroConeT(red.rows.len()));
        }
    }
    if !p.nonneg.is_empty() {
        for (_, e) in &p.nonneg {
            t.push(e, 1.0);
        }
        cones.push(NonnegativeConeT(p.nonneg.len()));
    }
    for soc in &p.socs {
        t.push(&soc.head, 1.0);
        for e in &soc.tail {
            t.push(e, 1.0);
        }
        cones.push(SecondOrderConeT(1 + soc.tail.len()));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    for lmi in &p.lmis {
        let d = lmi.matrix.nrows();
        let base = t.b.len();
        for j in 0..d {
            for i in 0..=j {
                debug_assert_eq!(t.b.len() - base, svec_index(i, j));
                let mut e = if i == j {
                    lmi.matrix.get(i, i).clone() - LinExpr::constant(lmi.margin)
                } else {
                    (lmi.matrix.get(i, j).clone() + lmi.matrix.get(j, i).clone()).scale(0.5)
                };
                e = e.normalize();
                t.push(&e, if i == j { 1.0 } else { sqrt2 });
            }
        }
        cones.push(PSDTriangleConeT(d));
    }

    let m = t.b.len();
    let a = CscMatrix::new_from_triplets(m, n, t.i, t.j, t.v);
    let pm = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    for &(i, c) in &p.objective.terms {
        q[i] += c;
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(opts.verbose)
        .max_iter(opts.max_iter)
        .tol_gap_abs(opts.tol)
        .tol_gap_rel(opts.tol)
        .tol_feas(opts.tol)
        .build()
        .map_err(|e| Error::Solver(format!("invalid settings: {e}")))?;
    let mut solver = DefaultSolver::new(&pm, &q, &a, &t.b, &cones, settings)
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let mut warnings = Vec::new();
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => {
            warnings.push("solver reached reduced accuracy only".to_string());
            SolveStatus::NearOptimal
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(Error::Infeasible(format!(
                "solver certified infeasibility ({:?})",
                sol.status
            )))
        }
        other => {
            return Err(Error::Solver(format!(
                "solver stopped with status {other:?}"
            )))
        }
    };

    let mut x = sol.x.clone();
    let mut equality_residual = 0.0;
    if let Some(red) = &reduced {
        let mut xv = DVector::from_column_slice(&x);
        red.project(&mut xv);
        equality_residual = (&red.a * &xv - &red.b).amax();
        x = xv.as_slice().to_vec();
    }
    let lmi_slack = p
        .lmis
        .iter()
        .map(|l| min_sym_eigenvalue(&l.matrix.eval(&x)) - l.margin)
        .fold(f64::INFINITY, f64::min);
    let objective = p.objective.eval(&x);
    Ok(Solution {
        x,
        objective,
        status,
        iterations: sol.iterations,
        equality_residual,
        lmi_slack,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::program::{AffineMat, MatrixNorm};

    #[test]
    fn svec_ordering_matches_triangle_layout() {
        assert_eq!(svec_index(0, 0), 0);
        assert_eq!(svec_index(0, 1), 1);
        assert_eq!(svec_index(1, 1), 2);
        assert_eq!(svec_index(0, 2), 3);
        assert_eq!(svec_index(1, 2), 4);
        assert_eq!(svec_index(2, 2), 5);
    }

    #[test]
    fn max_eigenvalue_by_epigraph() {
        // min t  s.t.  t I - C >= 0  gives lambda_max(C), which exercises the
        // off-diagonal scaling and ordering.
        let c = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        let mut p = ConicProgram::new();
        let t = p.scalar_var("t");
        let m = AffineMat::scaled(&t, &DMatrix::identity(3, 3)).minus_const(&c);
        p.psd("epi", m, 0.0);
        p.minimize(t);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let expect = crate::linalg::max_sym_eigenvalue(&c);
        assert!(
            (s.objective - expect).abs() < 1e-6,
            "{} vs {}",
            s.objective,
            expect
        );
    }

    #[test]
    fn spectral_and_frobenius_norm_bounds() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, -1.0, 0.5]);
        for (norm, expect) in [
            (MatrixNorm::Spectral, crate::linalg::spectral_norm(&c)),
            (MatrixNorm::Frobenius, c.norm()),
        ] {
            let mut p = ConicProgram::new();
            let t = p.norm_bound("n", &AffineMat::constant(&c), norm);
            p.minimize(t);
            let s = solve(&p, &SolverOptions::default()).unwrap();
            assert!((s.objective - expect).abs() < 1e-6, "{norm:?}");
        }
    }

    #[test]
    fn redundant_equalities_are_reduced_and_polished() {
        let mut p = ConicProgram::new();
        let v = p.matrix_var("v", 2, 1);
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 1.0, -1.0]);
        p.equal(
            "eq",
            &v.expr().lmul(&a),
            &DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 0.0]),
        );
        let t = p.norm_bound("n", &v.expr(), MatrixNorm::Frobenius);
        p.minimize(t);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let x = v.value(&s.x);
        assert!((x[0] - 0.5).abs() < 1e-9 && (x[1] - 0.5).abs() < 1e-9);
        assert!(s.equality_residual < 1e-12);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = ConicProgram::new();
        let v = p.matrix_var("v", 2, 1);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        p.equal(
            "eq",
            &v.expr().lmul(&a),
            &DMatrix::from_column_slice(2, 1, &[1.0, 3.0]),
        );
        p.minimize(LinExpr::default());
        assert!(matches!(
            solve(&p, &SolverOptions::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn conic_infeasibility_is_reported() {
        let mut p = ConicProgram::new();
        let s = p.sym_var("S", 2);
        p.psd("pos", s.expr(), 0.0);
        p.psd("neg", s.expr().scale(-1.0), 1.0);
        p.minimize(LinExpr::default());
        assert!(matches!(
            solve(&p, &SolverOptions::default()),
            Err(Error::Infeasible(_))
        ));
    }
}
