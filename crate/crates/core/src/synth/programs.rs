use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::program::{AffineMat, ConicProgram, LinExpr, MatVar, MatrixNorm};
use super::result::{
    ResidualReport, RobustParams, SolverStats, StabilityClaim, SynthMode, SynthesisResult,
};
use super::solver::{solve, Solution, SolverOptions};
use crate::basis::{DataMatrices, DataMode, RankStatus};
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};

/// Lower bound on the Petersen multiplier.
pub const EPSILON_FLOOR: f64 = 1e-9;
/// Distance kept from the endpoints of (-1, 1) for k1.
pub const K1_MARGIN: f64 = 1e-6;
/// Required stability margin of the returned closed-loop matrix.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub solver: SolverOptions,
    pub norm: MatrixNorm,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            norm: MatrixNorm::Spectral,
        }
    }
}

/// Margin for strict LMIs, scaled by the data magnitude.
pub fn strict_margin(data: &DataMatrices) -> f64 {
    let scale = [&data.u0, &data.x1, &data.z0]
        .iter()
        .map(|m| linalg::max_abs(m))
        .fold(1.0, f64::max);
    1e-7 * scale
}

#[derive(Clone, Copy, PartialEq)]
enum Normalization {
    BelowIdentity,
    AboveIdentity,
    AtMost(f64),
}

struct Core {
    prog: ConicProgram,
    p1: MatVar,
    y1: MatVar,
    g2: MatVar,
    margin: f64,
}

fn require_mode(data: &DataMatrices, modes: &[DataMode], op: &str) -> Result<()> {
    if !modes.contains(&data.mode) {
        return Err(Error::input(format!(
            "{op} does not accept {:?} data",
            data.mode
        )));
    }
    Ok(())
}

fn check_shapes(data: &DataMatrices) -> Result<()> {
    let t = data.len();
    let n = data.coord_dim();
    if data.u0.ncols() != t || data.x0.ncols() != t || data.x1.ncols() != t {
        return Err(Error::input(
            "data matrices disagree on the number of samples",
        ));
    }
    if data.x1.nrows() != n || data.dict_dim() < n {
        return Err(Error::input(
            "data matrices disagree on the state dimension",
        ));
    }
    for m in [&data.u0, &data.x0, &data.x1, &data.z0] {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("data contain non-finite values"));
        }
    }
    Ok(())
}

fn selector(rows: usize, cols: usize, offset: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| if i == j + offset { 1.0 } else { 0.0 })
}

/// Variables P1, Y1, G2 with Z0 Y1 = [P1; 0] and Z0 G2 = [0; I].
fn core(data: &DataMatrices, normalization: Normalization) -> Result<Core> {
    check_shapes(data)?;
    let n = data.coord_dim();
    let s = data.dict_dim();
    let t = data.len();
    let mut prog = ConicProgram::new();
    let p1 = prog.sym_var("P1", n);
    let y1 = prog.matrix_var("Y1", t, n);
    let g2 = prog.matrix_var("G2", t, s - n);
    let zeros = AffineMat::zeros(s - n, n);
    let lhs = y1
        .expr()
        .lmul(&data.z0)
        .minus(&AffineMat::vstack(&[&p1.expr(), &zeros]));
    prog.equal("Z0 Y1 = [P1; 0]", &lhs, &DMatrix::zeros(s, n));
    prog.equal(
        "Z0 G2 = [0; I]",
        &g2.expr().lmul(&data.z0),
        &selector(s, s - n, n),
    );
    let eye = AffineMat::identity(n);
    match normalization {
        Normalization::BelowIdentity => prog.psd("P1 <= I", eye.minus(&p1.expr()), 0.0),
        Normalization::AboveIdentity => prog.psd("P1 >= I", p1.expr().minus(&eye), 0.0),
        Normalization::AtMost(c) => prog.psd("P1 <= cI", eye.scale(c).minus(&p1.expr()), 0.0),
    }
    let margin = strict_margin(data);
    Ok(Core {
        prog,
        p1,
        y1,
        g2,
        margin,
    })
}

fn discrete_lyapunov(c: &mut Core, x1: &DMatrix<f64>) {
    let p = c.p1.expr();
    let xy = c.y1.expr().lmul(x1);
    let xyt = xy.transpose();
    let block = AffineMat::blocks(&[vec![Some(&p), Some(&xyt)], vec![Some(&xy), Some(&p)]]);
    c.prog.psd("Lyapunov", block, c.margin);
}

fn continuous_lyapunov(c: &mut Core, x1: &DMatrix<f64>) {
    let xy = c.y1.expr().lmul(x1);
    let sym = xy.plus(&xy.transpose()).scale(-1.0);
    c.prog.psd("Lyapunov", sym, c.margin);
    c.prog.psd("P1 > 0", c.p1.expr(), c.margin);
}

fn objective_norm(c: &mut Core, x1: &DMatrix<f64>, norm: MatrixNorm) -> LinExpr {
    let nblock = c.g2.expr().lmul(x1);
    c.prog.norm_bound("N", &nblock, norm)
}

struct Extracted {
    p1: DMatrix<f64>,
    y1: DMatrix<f64>,
    g1: DMatrix<f64>,
    g2: DMatrix<f64>,
}

fn extract(c: &Core, sol: &Solution) -> Result<Extracted> {
    let p1 = linalg::symmetrize(&c.p1.value(&sol.x));
    let y1 = c.y1.value(&sol.x);
    let g2 = c.g2.value(&sol.x);
    let inv =
        linalg::inverse(&p1).ok_or_else(|| Error::Solver("returned P1 is singular".into()))?;
    Ok(Extracted {
        g1: &y1 * inv,
        p1,
        y1,
        g2,
    })
}

struct Assembly<'a> {
    mode: SynthMode,
    data: &'a DataMatrices,
    ex: Extracted,
    sol: &'a Solution,
    opts: &'a SynthOptions,
    margin: f64,
    claim: StabilityClaim,
}

fn assemble(a: Assembly<'_>) -> Result<SynthesisResult> {
    let Assembly {
        mode,
        data,
        ex,
        sol,
        opts,
        margin,
        claim,
    } = a;
    let g = linalg::hstack(&[&ex.g1, &ex.g2]);
    let k = &data.u0 * &g;
    let m = &data.x1 * &ex.g1;
    let nmat = &data.x1 * &ex.g2;
    let s = data.dict_dim();
    let identity = linalg::max_abs(&(&data.z0 * &g - DMatrix::identity(s, s)));
    let stability = if mode.is_continuous() {
        linalg::max_real_eigenvalue(&m)
    } else {
        linalg::spectral_radius(&m)
    };
    let stable = if mode.is_continuous() {
        stability < -STABILITY_MARGIN
    } else {
        stability < 1.0 - STABILITY_MARGIN
    };
    if !stable {
        return Err(Error::Solver(format!(
            "solver returned a closed-loop matrix without the required stability margin ({stability:.6e})"
        )));
    }
    let mut warnings = sol.warnings.clone();
    if let RankStatus::Deficient { rank, rows } = RankStatus::of(&data.z0, RANK_TOL) {
        warnings.push(format!(
            "Z0 is rank deficient (rank {rank} of {rows}); the dictionary has redundant entries on these data"
        ));
    }
    if identity > 1e-6 {
        warnings.push(format!(
            "Z0 [G1 G2] deviates from the identity by {identity:.3e}"
        ));
    }
    Ok(SynthesisResult {
        mode,
        labels: Vec::new(),
        k,
        p1: ex.p1,
        y1: ex.y1,
        g1: ex.g1,
        g2: ex.g2,
        m,
        n: nmat,
        objective: sol.objective,
        claim,
        residuals: ResidualReport {
            equality: sol.equality_residual,
            identity,
            min_lmi_eigenvalue: sol.lmi_slack,
            margin,
            stability,
        },
        solver: SolverStats {
            status: sol.status,
            iterations: sol.iterations,
            tolerance: opts.solver.tol,
        },
        k1: None,
        epsilon: None,
        robust: None,
        stability_probability: None,
        warnings,
        provenance: Default::default(),
    })
}

fn claim_from_objective(objective: f64, data: &DataMatrices, tol: f64) -> StabilityClaim {
    let scale = linalg::max_abs(&data.x1).max(1.0);
    if objective.abs() <= 1e2 * tol * scale {
        StabilityClaim::Global
    } else {
        StabilityClaim::Local
    }
}

fn finish(
    mode: SynthMode,
    data: &DataMatrices,
    c: &Core,
    sol: &Solution,
    opts: &SynthOptions,
    claim: StabilityClaim,
) -> Result<SynthesisResult> {
    let ex = extract(c, sol)?;
    assemble(Assembly {
        mode,
        data,
        ex,
        sol,
        opts,
        margin: c.margin,
        claim,
    })
}

/// Exact cancellation: X1 G2 = 0 with a stable linear part.
pub fn synth_exact(data: &DataMatrices, opts: &SynthOptions) -> Result<SynthesisResult> {
    require_mode(data, &[DataMode::Discrete], "exact synthesis")?;
    let mut c = core(data, Normalization::BelowIdentity)?;
    discrete_lyapunov(&mut c, &data.x1);
    let n = data.coord_dim();
    let s = data.dict_dim();
    c.prog.equal(
        "X1 G2 = 0",
        &c.g2.expr().lmul(&data.x1),
        &DMatrix::zeros(n, s - n),
    );
    c.prog.minimize(LinExpr::default());
    let sol = solve(&c.prog, &opts.solver).map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!(
            "exact nonlinearity cancellation is impossible on these data ({msg}); use the minimum-norm program"
        )),
        other => other,
    })?;
    finish(
        SynthMode::Exact,
        data,
        &c,
        &sol,
        opts,
        StabilityClaim::Global,
    )
}

/// Minimize the norm of the residual nonlinearity X1 G2.
pub fn synth_min_norm(data: &DataMatrices, opts: &SynthOptions) -> Result<SynthesisResult> {
    require_mode(data, &[DataMode::Discrete], "minimum-norm synthesis")?;
    let mut c = core(data, Normalization::BelowIdentity)?;
    discrete_lyapunov(&mut c, &data.x1);
    let t = objective_norm(&mut c, &data.x1, opts.norm);
    c.prog.minimize(t);
    let sol = solve(&c.prog, &opts.solver)?;
    let claim = claim_from_objective(sol.objective, data, opts.solver.tol);
    finish(SynthMode::MinNorm, data, &c, &sol, opts, claim)
}

fn trace_pair(prog: &mut ConicProgram, label: &str, block: &AffineMat) -> LinExpr {
    let (r, q) = block.shape();
    if r == 0 || q == 0 {
        return LinExpr::default();
    }
    let x = prog.sym_var(&format!("{label}_X"), r);
    let v = prog.sym_var(&format!("{label}_V"), q);
    let xe = x.expr();
    let ve = v.expr();
    let bt = block.transpose();
    let lmi = AffineMat::blocks(&[vec![Some(&xe), Some(block)], vec![Some(&bt), Some(&ve)]]);
    prog.psd(label, lmi, 0.0);
    xe.trace() + ve.trace()
}

/// Sparsity-promoting variant: minimize trace(X) + trace(V) with
/// [X, X1 G2; (X1 G2)', V] >= 0, optionally adding the same pair on X1 Y1.
pub fn synth_sparse(
    data: &DataMatrices,
    regularize_linear: bool,
    opts: &SynthOptions,
) -> Result<SynthesisResult> {
    require_mode(data, &[DataMode::Discrete], "sparse synthesis")?;
    let norm = if regularize_linear {
        Normalization::AboveIdentity
    } else {
        Normalization::BelowIdentity
    };
    let mut c = core(data, norm)?;
    discrete_lyapunov(&mut c, &data.x1);
    let nblock = c.g2.expr().lmul(&data.x1);
    let mut obj = trace_pair(&mut c.prog, "sparse N", &nblock);
    if regularize_linear {
        let xy = c.y1.expr().lmul(&data.x1);
        obj = obj + trace_pair(&mut c.prog, "sparse M", &xy);
    }
    c.prog.minimize(obj);
    let sol = solve(&c.prog, &opts.solver)?;
    let ex = extract(&c, &sol)?;
    let residual = linalg::spectral_norm(&(&data.x1 * &ex.g2));
    let claim = claim_from_objective(residual, data, opts.solver.tol);
    assemble(Assembly {
        mode: SynthMode::Sparse,
        data,
        ex,
        sol: &sol,
        opts,
        margin: c.margin,
        claim,
    })
}

/// Continuous-time design from derivative samples.
pub fn synth_ct(data: &DataMatrices, opts: &SynthOptions) -> Result<SynthesisResult> {
    require_mode(data, &[DataMode::Continuous], "continuous-time synthesis")?;
    let mut c = core(data, Normalization::BelowIdentity)?;
    continuous_lyapunov(&mut c, &data.x1);
    let t = objective_norm(&mut c, &data.x1, opts.norm);
    c.prog.minimize(t);
    let sol = solve(&c.prog, &opts.solver)?;
    let claim = claim_from_objective(sol.objective, data, opts.solver.tol);
    finish(SynthMode::Continuous, data, &c, &sol, opts, claim)
}

/// Dynamic controller u+ = K Z(x, u) from input-augmented data.
pub fn synth_extended(data: &DataMatrices, opts: &SynthOptions) -> Result<SynthesisResult> {
    require_mode(data, &[DataMode::Extended], "extended synthesis")?;
    let mut c = core(data, Normalization::BelowIdentity)?;
    discrete_lyapunov(&mut c, &data.x1);
    let t = objective_norm(&mut c, &data.x1, opts.norm);
    c.prog.minimize(t);
    let sol = solve(&c.prog, &opts.solver)?;
    let claim = claim_from_objective(sol.objective, data, opts.solver.tol);
    finish(SynthMode::Extended, data, &c, &sol, opts, claim)
}

/// The robust-stability block
///
/// ```text
/// [ P1 - Omega   (X1 Y1)'               Y1'   ]
/// [ X1 Y1        P1 - eps E D D' E'     0     ]
/// [ Y1           0                      eps I ]
/// ```
///
/// in terms of affine arguments.
pub fn petersen_affine(
    p1: &AffineMat,
    y1: &AffineMat,
    eps: &LinExpr,
    x1: &DMatrix<f64>,
    e: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    omega: &DMatrix<f64>,
) -> AffineMat {
    let t = y1.nrows();
    let edde = e * delta * delta.transpose() * e.transpose();
    let top = p1.minus_const(omega);
    let xy = y1.lmul(x1);
    let xyt = xy.transpose();
    let y1t = y1.transpose();
    let mid = p1.minus(&AffineMat::scaled(eps, &edde));
    let bottom = AffineMat::scaled(eps, &DMatrix::identity(t, t));
    AffineMat::blocks(&[
        vec![Some(&top), Some(&xyt), Some(&y1t)],
        vec![Some(&xy), Some(&mid), None],
        vec![Some(y1), None, Some(&bottom)],
    ])
}

/// Numeric robust-stability block for given P1, Y1 and eps.
#[allow(clippy::too_many_arguments)]
pub fn petersen_block(
    p1: &DMatrix<f64>,
    y1: &DMatrix<f64>,
    x1: &DMatrix<f64>,
    e: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    eps: f64,
) -> DMatrix<f64> {
    petersen_affine(
        &AffineMat::constant(p1),
        &AffineMat::constant(y1),
        &LinExpr::constant(eps),
        x1,
        e,
        delta,
        omega,
    )
    .eval(&[])
}

fn check_robust(params: &RobustParams, n: usize) -> Result<DMatrix<f64>> {
    let e = params.disturbance_matrix(n);
    let s = params.delta.nrows();
    if e.nrows() != n || e.ncols() != s || params.delta.ncols() != s {
        return Err(Error::input(format!(
            "E must be {n}x{s} and Delta {s}x{s}, got E {:?}, Delta {:?}",
            e.shape(),
            params.delta.shape()
        )));
    }
    if params.omega.shape() != (n, n) {
        return Err(Error::input(format!("Omega must be {n}x{n}")));
    }
    if params.delta.iter().chain(e.iter()).any(|v| !v.is_finite()) {
        return Err(Error::input("Delta and E must be finite"));
    }
    if linalg::min_sym_eigenvalue(&params.omega) <= 0.0 {
        return Err(Error::input("Omega must be positive definite"));
    }
    if params.lambda_p < 0.0
        || params.lambda_g < 0.0
        || !params.lambda_p.is_finite()
        || !params.lambda_g.is_finite()
    {
        return Err(Error::input("regularization weights must be nonnegative"));
    }
    Ok(e)
}

/// Robust design against disturbances with D D' <= Delta Delta'.
pub fn synth_robust(
    data: &DataMatrices,
    params: &RobustParams,
    opts: &SynthOptions,
) -> Result<SynthesisResult> {
    require_mode(data, &[DataMode::Discrete], "robust synthesis")?;
    let n = data.coord_dim();
    let e = check_robust(params, n)?;
    let bound = 1e6 * linalg::max_sym_eigenvalue(&params.omega).max(1.0);
    let mut c = core(data, Normalization::AtMost(bound))?;
    let eps = c.prog.scalar_var("eps");
    c.prog.at_least("eps floor", &eps, EPSILON_FLOOR);
    let block = petersen_affine(
        &c.p1.expr(),
        &c.y1.expr(),
        &eps,
        &data.x1,
        &e,
        &params.delta,
        &params.omega,
    );
    c.prog.psd("Petersen", block, c.margin);
    let mut obj = objective_norm(&mut c, &data.x1, opts.norm);
    if params.lambda_p > 0.0 {
        let tp = c.prog.norm_bound("P1", &c.p1.expr(), MatrixNorm::Spectral);
        obj = obj + tp.scale(params.lambda_p);
    }
    if params.lambda_g > 0.0 {
        let tg = c.prog.norm_bound("G2", &c.g2.expr(), MatrixNorm::Spectral);
        obj = obj + tg.scale(params.lambda_g);
    }
    c.prog.minimize(obj);
    let sol = solve(&c.prog, &opts.solver).map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!(
            "robust program infeasible ({msg}); Delta may be too large for the data excitation"
        )),
        other => other,
    })?;
    let eps_val = eps.eval(&sol.x);
    let claim = StabilityClaim::Local;
    let mut res = finish(SynthMode::Robust, data, &c, &sol, opts, claim)?;
    if eps_val < 10.0 * EPSILON_FLOOR {
        res.warnings
            .push(format!("Petersen multiplier collapsed to {eps_val:.3e}; the certificate is numerically fragile"));
    }
    res.epsilon = Some(eps_val);
    res.robust = Some(RobustParams {
        e: Some(e),
        ..params.clone()
    });
    Ok(res)
}

/// Stein solution X = M' X M + I, for the Lyapunov matrix of a Schur M.
fn stein(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let kron = m.transpose().kronecker(&m.transpose());
    let lhs = DMatrix::identity(n * n, n * n) - kron;
    let rhs = DMatrix::<f64>::identity(n, n);
    let vec = lhs
        .lu()
        .solve(&nalgebra::DVector::from_column_slice(rhs.as_slice()))?;
    Some(linalg::symmetrize(&DMatrix::from_column_slice(
        n,
        n,
        vec.as_slice(),
    )))
}

/// Feedback linearization in output coordinates w = (y, y+, ...).
pub fn synth_normal_form(data: &DataMatrices, opts: &SynthOptions) -> Result<SynthesisResult> {
    require_mode(data, &[DataMode::Output], "normal-form synthesis")?;
    check_shapes(data)?;
    if data.input_dim() != 1 {
        return Err(Error::input("normal-form synthesis needs a single input"));
    }
    let n = data.coord_dim();
    let s = data.dict_dim();
    let t = data.len();
    if let RankStatus::Deficient { rank, rows } = RankStatus::of(&data.z0, RANK_TOL) {
        return Err(Error::Infeasible(format!(
            "Z0 = [W0; Q0] is rank deficient (rank {rank} of {rows}); drop entries of Q that are linear \
             combinations of the output coordinates, such as the state itself"
        )));
    }
    let mut prog = ConicProgram::new();
    let g1 = prog.matrix_var("G1", t, n);
    let g2 = prog.matrix_var("G2", t, s - n);
    let k1 = prog.scalar_var("k1");
    prog.equal(
        "Z0 G1 = [I; 0]",
        &g1.expr().lmul(&data.z0),
        &selector(s, n, 0),
    );
    prog.equal(
        "Z0 G2 = [0; I]",
        &g2.expr().lmul(&data.z0),
        &selector(s, s - n, n),
    );
    let mut first_col = DMatrix::zeros(n, n);
    first_col[(n - 1, 0)] = 1.0;
    let target = AffineMat::constant(&selector(n, n, 1).transpose())
        .plus(&AffineMat::scaled(&k1, &first_col));
    prog.equal(
        "W1 G1 = Ac + Bc [k1 0]",
        &g1.expr().lmul(&data.x1).minus(&target),
        &DMatrix::zeros(n, n),
    );
    prog.equal(
        "W1 G2 = 0",
        &g2.expr().lmul(&data.x1),
        &DMatrix::zeros(n, s - n),
    );
    prog.at_least("k1 lower", &k1, -1.0 + K1_MARGIN);
    prog.at_most("k1 upper", &k1, 1.0 - K1_MARGIN);
    prog.minimize(LinExpr::default());
    let sol = solve(&prog, &opts.solver)?;
    let g1v = g1.value(&sol.x);
    let g2v = g2.value(&sol.x);
    let m = &data.x1 * &g1v;
    let x = stein(&m)
        .ok_or_else(|| Error::Solver("closed loop in output coordinates is not Schur".into()))?;
    let p1 = linalg::inverse(&x).ok_or_else(|| Error::Solver("singular Lyapunov matrix".into()))?;
    let p1 = linalg::symmetrize(&(&p1 / linalg::max_sym_eigenvalue(&p1)));
    let ex = Extracted {
        y1: &g1v * &p1,
        p1,
        g1: g1v,
        g2: g2v,
    };
    let mut res = assemble(Assembly {
        mode: SynthMode::NormalForm,
        data,
        ex,
        sol: &sol,
        opts,
        margin: 0.0,
        claim: StabilityClaim::Global,
    })?;
    res.k1 = Some(k1.eval(&sol.x));
    Ok(res)
}

/// Certify a given gain (or the open loop when `gain` is `None`) by adding
/// U0 [Y1 G2] = K blkdiag(P1, I) to the minimum-norm program.
pub fn verify_given_k(
    data: &DataMatrices,
    gain: Option<&DMatrix<f64>>,
    opts: &SynthOptions,
) -> Result<SynthesisResult> {
    require_mode(data, &[DataMode::Discrete], "gain verification")?;
    let n = data.coord_dim();
    let s = data.dict_dim();
    let m = data.input_dim();
    if let Some(k) = gain {
        if k.shape() != (m, s) {
            return Err(Error::input(format!(
                "gain must be {m}x{s}, got {:?}",
                k.shape()
            )));
        }
    }
    let mut c = core(data, Normalization::BelowIdentity)?;
    discrete_lyapunov(&mut c, &data.x1);
    let lhs_y = c.y1.expr().lmul(&data.u0);
    let lhs_g = c.g2.expr().lmul(&data.u0);
    match gain {
        Some(k) => {
            let kbar = k.columns(0, n).into_owned();
            let khat = k.columns(n, s - n).into_owned();
            let rhs_y = c.p1.expr().lmul(&kbar);
            c.prog.equal(
                "U0 Y1 = Kbar P1",
                &lhs_y.minus(&rhs_y),
                &DMatrix::zeros(m, n),
            );
            c.prog.equal("U0 G2 = Khat", &lhs_g, &khat);
        }
        None => {
            c.prog.equal("U0 Y1 = 0", &lhs_y, &DMatrix::zeros(m, n));
            c.prog.equal("U0 G2 = 0", &lhs_g, &DMatrix::zeros(m, s - n));
        }
    }
    let t = objective_norm(&mut c, &data.x1, opts.norm);
    c.prog.minimize(t);
    let sol = solve(&c.prog, &opts.solver).map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!(
            "gain cannot be certified with a quadratic Lyapunov function on these data ({msg})"
        )),
        other => other,
    })?;
    let claim = claim_from_objective(sol.objective, data, opts.solver.tol);
    finish(SynthMode::Verify, data, &c, &sol, opts, claim)
}
