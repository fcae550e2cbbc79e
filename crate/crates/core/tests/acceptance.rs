//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The summary line counts failures; set `ACCEPTANCE_STRICT=1` to turn any
//! FAIL into a non-zero exit status.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use ddnc_core::basis::{monomials_up_to_degree, BasisLibrary, DataMatrices, DataMode, RankStatus};
use ddnc_core::certify::*;
use ddnc_core::cli::demo::example9_single_config;
use ddnc_core::cli::{demo_config, run_sweep, Pipeline, SweepRow};
use ddnc_core::simlab::{catalog, simulate, DisturbanceSpec, SystemModel, TimeMode};
use ddnc_core::synth::*;
use ddnc_core::{linalg, Error};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| {
        scale * rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

/// W with spectral norm one half of the time, uniformly shrunk otherwise.
fn contraction(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    let w = gaussian(rng, r, c, 1.0);
    let w = &w / linalg::spectral_norm(&w);
    if rng.random_bool(0.5) {
        w
    } else {
        w * rng.random_range(0.0..1.0)
    }
}

fn entry(r: &SynthesisResult, label: &str) -> Result<f64, String> {
    let j = r
        .labels
        .iter()
        .position(|l| l == label)
        .ok_or(format!("no entry {label}"))?;
    Ok(r.k[(0, j)])
}

fn pipeline_result(id: usize) -> Result<SynthesisResult, String> {
    let p =
        Pipeline::new(demo_config(id).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let runs = p.simulate().map_err(|e| e.to_string())?;
    let ds = p.dataset(runs).map_err(|e| e.to_string())?;
    p.synthesize(&ds).map_err(|e| e.to_string())
}

fn pendulum_cancellation() -> Check {
    let start = Instant::now();
    let r = pipeline_result(1)?;
    let secs = start.elapsed().as_secs_f64();
    let k = entry(&r, "sin(x1)")?;
    ensure((k + 9.8).abs() <= 1e-4, format!("K[sin x1] = {k}"))?;
    ensure(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("K[sin x1] = {k:.6}, {secs:.2} s"))
}

fn cubic_cancellation() -> Check {
    let r = pipeline_result(2)?;
    let k = entry(&r, "x1^3")?;
    ensure((k + 1.0).abs() <= 1e-4, format!("K[x1^3] = {k}"))?;
    let worst = (r.state_dim()..r.labels.len())
        .filter(|&j| r.labels[j] != "x1^3")
        .map(|j| r.k[(0, j)].abs())
        .fold(0.0, f64::max);
    ensure(
        worst <= 1e-3,
        format!("largest other nonlinear entry {worst}"),
    )?;
    Ok(format!(
        "K[x1^3] = {k:.6}, other nonlinear entries <= {worst:.1e}"
    ))
}

fn cubic_square_data() -> DataMatrices {
    data(
        "cubic-square",
        &cubic_lib(),
        &config(20, 0.5, 2),
        &DisturbanceSpec::None,
    )
    .unwrap()
}

fn minimum_norm() -> Check {
    let d = cubic_square_data();
    let r = synth_min_norm(&d, &SynthOptions::default()).map_err(|e| e.to_string())?;
    ensure(
        (r.objective - 0.2).abs() <= 1e-3,
        format!("objective {}", r.objective),
    )?;
    match synth_exact(&d, &SynthOptions::default()) {
        Err(Error::Infeasible(_)) => Ok(format!(
            "objective {:.6}, exact program infeasible",
            r.objective
        )),
        Err(e) => Err(format!("exact program failed differently: {e}")),
        Ok(_) => Err("exact program unexpectedly feasible".into()),
    }
}

fn exact_roa_containment() -> Check {
    let lib = cubic_lib();
    let d = cubic_square_data();
    let k = simple_polynomial_gain();
    let r = verify_given_k(&d, Some(&k), &SynthOptions::default()).map_err(|e| e.to_string())?;
    let model = DecrementModel::nominal(&r, &lib).map_err(|e| e.to_string())?;
    let grid = GridSpec::symmetric(2, 8.0, 201).unwrap();
    let roa = estimate_roa(&model, None, &grid).map_err(|e| e.to_string())?;
    ensure(!roa.empty, "empty estimate")?;
    let exact = |x: &[f64]| (0.5 * x[0] + 0.2 * x[1] * x[1]).abs() < 5.0;
    let outside = roa
        .evidence
        .iter()
        .enumerate()
        .filter(|(i, p)| p.v <= roa.gamma && !exact(&grid.point(*i)))
        .count();
    ensure(
        outside == 0,
        format!("{outside} estimate points outside the exact region"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for i in 0..500 {
        let x0 = sample_in_sublevel(&roa.lyapunov, roa.gamma, &mut rng);
        let (vmax, converged, _) = rollout(
            "cubic-square",
            &k,
            &lib,
            &roa.lyapunov,
            &x0,
            100,
            &DisturbanceSpec::None,
            i,
        );
        ensure(
            vmax <= roa.gamma * (1.0 + 1e-9),
            format!("rollout {i} left the estimate"),
        )?;
        ensure(converged, format!("rollout {i} did not converge"))?;
    }
    let x0 = DVector::from_vec(vec![0.0, 6.0]);
    ensure(
        !exact(x0.as_slice()),
        "probe point is inside the exact region",
    )?;
    let (_, _, diverged) = rollout(
        "cubic-square",
        &k,
        &lib,
        &roa.lyapunov,
        &x0,
        100,
        &DisturbanceSpec::None,
        0,
    );
    ensure(diverged, "probe outside the exact region did not diverge")?;
    Ok(format!(
        "gamma {:.4}, 500 rollouts invariant and convergent, (0, 6) diverges",
        roa.gamma
    ))
}

fn probability_formula() -> Check {
    let b =
        prob_bound_bounded(0.01, 0.01 * 0.01 / 3.0, 30, 100, 4e-5, 1).map_err(|e| e.to_string())?;
    ensure(
        (b.bound - 0.0348).abs() <= 1e-3,
        format!("bound {}", b.bound),
    )?;
    ensure(
        (b.probability - 0.9948).abs() <= 1e-3,
        format!("probability {}", b.probability),
    )?;
    Ok(format!(
        "bound {:.6}, probability {:.6}",
        b.bound, b.probability
    ))
}

fn normal_form() -> Check {
    let r = pipeline_result(10)?;
    for (label, v) in [
        ("x1^2", -0.1),
        ("x2^2", -1.0),
        ("x1^3", -1.0),
        ("x1*x2^2", -0.08),
        ("x2^4", -0.016),
    ] {
        let k = entry(&r, label)?;
        ensure(
            (k - v).abs() <= 1e-3,
            format!("K[{label}] = {k}, expected {v}"),
        )?;
    }
    let k1 = r.k1.ok_or("no k1")?;
    ensure(k1 > -1.0 && k1 < 1.0, format!("k1 = {k1}"))?;
    let n = r.state_dim() as i32;
    let worst = linalg::eigenvalues(&r.m)
        .iter()
        .map(|&(re, im)| (re.hypot(im).powi(n) - k1.abs()).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-6, format!("| |lambda|^n - |k1| | = {worst}"))?;
    Ok(format!(
        "forced entries match, k1 = {k1:.6}, eigenvalue modulus error {worst:.1e}"
    ))
}

/// `None` when the design program has no solution for this seed.
fn robust_seed(seed: u64) -> Result<Option<f64>, String> {
    let delta = 0.01;
    let (r, d) = match pendulum_robust(delta, seed) {
        Ok(v) => v,
        Err(Error::Infeasible(_) | Error::Solver(_)) => return Ok(None),
        Err(e) => return Err(format!("seed {seed}: {e}")),
    };
    let e = catalog::model("pendulum-noisy").unwrap().e;
    let clean = &d.x1 - &e * d.d0.as_ref().unwrap();
    let rho = linalg::spectral_radius(&(&clean * &r.g1));
    if rho >= 1.0 {
        return Err(format!("seed {seed}: true closed-loop radius {rho}"));
    }
    let lib = remainder_lib();
    let model = DecrementModel::noisy(&r, &lib).map_err(|e| e.to_string())?;
    let rpi = certify_rpi(
        &model,
        &DisturbanceBound::Constant { delta },
        &pendulum_grid(),
    )
    .map_err(|e| e.to_string())?;
    if rpi.empty || rpi.gamma <= 0.05 {
        return Err(format!("seed {seed}: gamma {}", rpi.gamma));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = DisturbanceSpec::Uniform { delta };
    for i in 0..500 {
        let x0 = sample_in_sublevel(&rpi.lyapunov, rpi.gamma, &mut rng);
        let (vmax, _, _) = rollout(
            "pendulum-noisy",
            &r.k,
            &lib,
            &rpi.lyapunov,
            &x0,
            200,
            &dist,
            seed * 1000 + i,
        );
        if vmax > rpi.gamma * (1.0 + 1e-9) {
            return Err(format!("seed {seed}: rollout {i} left the set"));
        }
    }
    Ok(Some(rpi.gamma))
}

fn robust_pipeline() -> Check {
    let outcomes: Vec<Result<Option<f64>, String>> =
        (0..100u64).into_par_iter().map(robust_seed).collect();
    let feasible = outcomes.iter().filter(|o| !matches!(o, Ok(None))).count();
    let failures: Vec<&String> = outcomes.iter().filter_map(|o| o.as_ref().err()).collect();
    let gammas: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.clone().ok().flatten())
        .collect();
    let min = gammas.iter().copied().fold(f64::INFINITY, f64::min);
    let summary = format!("{feasible} of 100 feasible, smallest passing gamma {min:.4}");
    ensure(feasible >= 95, summary.clone())?;
    if !failures.is_empty() {
        let list: Vec<&str> = failures.iter().map(|s| s.as_str()).collect();
        return Err(format!(
            "{summary}; {} failing: {}",
            failures.len(),
            list.join("; ")
        ));
    }
    Ok(format!(
        "{summary}, 500 disturbed rollouts per seed stay inside"
    ))
}

struct PetersenInstance {
    p1: DMatrix<f64>,
    y1: DMatrix<f64>,
    x1: DMatrix<f64>,
    e: DMatrix<f64>,
    delta: DMatrix<f64>,
    omega: DMatrix<f64>,
}

/// Random data with P1 scaled to lie anywhere from just above the smallest
/// feasible multiple of its shape up to twice that.
fn petersen_instance(rng: &mut ChaCha8Rng) -> PetersenInstance {
    let n = rng.random_range(1..=3);
    let s = rng.random_range(1..=2);
    let t = rng.random_range(n + 1..=8);
    let x1 = gaussian(rng, n, t, 1.0);
    let e = gaussian(rng, n, s, 1.0);
    let delta = gaussian(rng, s, s, 0.3);
    let r = gaussian(rng, n, n, 1.0);
    let omega = DMatrix::identity(n, n) * 0.1 + &r * r.transpose() * 0.1;
    let y1 = gaussian(rng, t, n, 0.3);
    let eps = 10f64.powf(rng.random_range(-1.0..1.0));
    let sh = gaussian(rng, n, n, 1.0);
    let shape = DMatrix::identity(n, n) + &sh * sh.transpose() * 0.5;
    let feasible = |a: f64| {
        linalg::min_sym_eigenvalue(&petersen_block(
            &(&shape * a),
            &y1,
            &x1,
            &e,
            &delta,
            &omega,
            eps,
        )) > 0.0
    };
    let mut hi = 1.0;
    while !feasible(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let alpha = hi * (1.0 + 10f64.powf(rng.random_range(-6.0..0.0)));
    let p1 = &shape * alpha;
    assert!(feasible(alpha));
    PetersenInstance {
        p1,
        y1,
        x1,
        e,
        delta,
        omega,
    }
}

fn petersen_soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let mut worst = f64::INFINITY;
    for i in 0..1000 {
        let p = petersen_instance(&mut rng);
        let pinv = linalg::inverse(&p.p1).unwrap();
        let (s, t) = (p.delta.nrows(), p.x1.ncols());
        for _ in 0..1000 {
            let d = &p.delta * contraction(&mut rng, s, t);
            let xd = (&p.x1 - &p.e * d) * &p.y1;
            let lhs = xd.transpose() * &pinv * &xd - &p.p1 + &p.omega;
            let margin = linalg::min_sym_eigenvalue(&(-lhs));
            worst = worst.min(margin);
            ensure(margin >= -1e-9, format!("instance {i}: margin {margin}"))?;
        }
    }
    let mut lemma_worst = f64::INFINITY;
    for i in 0..1000 {
        let (n, s, t) = (
            rng.random_range(1..=4),
            rng.random_range(1..=3),
            rng.random_range(1..=8),
        );
        let b = gaussian(&mut rng, n, t, 1.0);
        let c = gaussian(&mut rng, s, n, 1.0);
        let delta = gaussian(&mut rng, s, s, 1.0);
        let eps = 10f64.powf(rng.random_range(-2.0..2.0));
        let d = &delta * contraction(&mut rng, s, t);
        let cross = &b * d.transpose() * &c;
        let lhs = &cross + cross.transpose();
        let rhs = &b * b.transpose() / eps + c.transpose() * &delta * delta.transpose() * &c * eps;
        let margin = linalg::min_sym_eigenvalue(&(rhs - lhs));
        lemma_worst = lemma_worst.min(margin);
        ensure(
            margin >= -1e-9,
            format!("trial {i}: completion-of-squares margin {margin}"),
        )?;
    }
    Ok(format!(
        "worst margin {worst:.2e} over 10^6 disturbance samples, {lemma_worst:.2e} over 1000 cross-term trials"
    ))
}

/// A random polynomial plant together with a stabilizing gain built from
/// the model. With `linearizing`, B is square and the gain also cancels
/// every nonlinear term.
fn harness_plant(rng: &mut ChaCha8Rng, linearizing: bool) -> (SystemModel, DMatrix<f64>) {
    let n = rng.random_range(2..=3);
    let pool = monomials_up_to_degree(n, 3).unwrap().nonlinear().to_vec();
    let count = rng.random_range(1..=3);
    let q: Vec<_> = sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    let lib = BasisLibrary::new(n, 0, q).unwrap();
    let f = gaussian(rng, n, n, 1.0);
    let f = &f * (rng.random_range(0.2..0.8) / linalg::spectral_radius(&f).max(1e-9));
    let a_nl = gaussian(rng, n, count, 0.3);
    let (a_lin, b, k) = if linearizing {
        let b = loop {
            let b = gaussian(rng, n, n, 1.0);
            if b.clone().svd(false, false).singular_values.min() > 0.3 {
                break b;
            }
        };
        let a_lin = gaussian(rng, n, n, 0.4);
        let target = linalg::hstack(&[&(&f - &a_lin), &(-&a_nl)]);
        let k = linalg::inverse(&b).unwrap() * target;
        (a_lin, b, k)
    } else {
        let b = gaussian(rng, n, 1, 1.0);
        let k_lin = gaussian(rng, 1, n, 0.3);
        let a_lin = &f - &b * &k_lin;
        let k = linalg::hstack(&[&k_lin, &DMatrix::zeros(1, count)]);
        (a_lin, b, k)
    };
    let a = linalg::hstack(&[&a_lin, &a_nl]);
    let m = SystemModel::new(
        "harness",
        a,
        b,
        DMatrix::zeros(n, 0),
        lib,
        TimeMode::Discrete,
    )
    .unwrap();
    (m, k)
}

fn parametrization_feasibility() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut feasible, mut tried, mut skipped) = (0, 0, 0);
    while tried < 50 {
        let linearizing = tried % 2 == 0;
        let (m, k) = harness_plant(&mut rng, linearizing);
        let n = m.state_dim();
        let closed = &m.a + &m.b * &k;
        assert!(linalg::spectral_radius(&closed.columns(0, n).into_owned()) < 1.0);
        if linearizing {
            assert!(linalg::max_abs(&closed.columns(n, closed.ncols() - n).into_owned()) < 1e-10);
        }
        let horizon = m.dictionary.dim() + m.input_dim() + 4;
        let Ok(traj) = simulate(
            &m,
            &DisturbanceSpec::None,
            &config(horizon, 0.3, rng.random()),
        ) else {
            skipped += 1;
            continue;
        };
        let d = DataMatrices::build(&traj, &m.dictionary, DataMode::Discrete).unwrap();
        if !RankStatus::of(&linalg::vstack(&[&d.u0, &d.z0]), 1e-8).is_full() {
            skipped += 1;
            continue;
        }
        tried += 1;
        let r = if linearizing {
            synth_exact(&d, &SynthOptions::default())
        } else {
            synth_min_norm(&d, &SynthOptions::default())
        };
        match r {
            Ok(_) => feasible += 1,
            Err(e) => {
                return Err(format!(
                    "system {tried} ({}): {e}",
                    if linearizing { "exact" } else { "min-norm" }
                ))
            }
        }
    }
    Ok(format!(
        "{feasible} of 50 feasible (25 exact, 25 min-norm); {skipped} candidates without rich or bounded data discarded"
    ))
}

fn decrement_oracles() -> Check {
    let lib = cubic_lib();
    let d = cubic_square_data();
    let r = synth_min_norm(&d, &SynthOptions::default()).map_err(|e| e.to_string())?;
    let model = DecrementModel::nominal(&r, &lib).map_err(|e| e.to_string())?;
    let plant = catalog::model("cubic-square").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let mut worst_h: f64 = 0.0;
    for _ in 0..1000 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let u = &r.k * lib.eval(x.as_slice()).unwrap();
        let next = plant.step(&x, &u, &DVector::zeros(2), 0.1);
        let truth = model.lyapunov.value(next.as_slice()) - model.lyapunov.value(x.as_slice());
        worst_h = worst_h.max((model.h(x.as_slice()) - truth).abs());
    }
    ensure(
        worst_h <= 1e-10,
        format!("nominal decrement error {worst_h}"),
    )?;

    let delta = 0.01;
    let noisy = catalog::model("pendulum-noisy").unwrap();
    let lib = remainder_lib();
    let mut slack = f64::INFINITY;
    for seed in 0..5 {
        let (r, d) = pendulum_robust(delta, seed).map_err(|e| e.to_string())?;
        let norm = linalg::spectral_norm(&r.robust.as_ref().unwrap().delta);
        ensure(
            linalg::spectral_norm(d.d0.as_ref().unwrap()) <= norm,
            "recorded disturbance exceeds the bound",
        )?;
        let model = DecrementModel::noisy(&r, &lib).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let dist = DVector::from_element(1, rng.random_range(-delta..=delta));
            let u = &r.k * lib.eval(x.as_slice()).unwrap();
            let next = noisy.step(&x, &u, &dist, 0.1);
            let truth = model.lyapunov.value(next.as_slice()) - model.lyapunov.value(x.as_slice());
            let bound = model.ell(x.as_slice()) + model.g(x.as_slice(), delta);
            slack = slack.min(bound - truth);
        }
    }
    ensure(
        slack >= -1e-9,
        format!("noisy bound violated by {}", -slack),
    )?;
    Ok(format!("nominal error {worst_h:.1e} over 1000 states, noisy bound slack >= {slack:.2e} over 1000 samples"))
}

fn median_area(rows: &[SweepRow]) -> f64 {
    let mut v: Vec<f64> = rows.iter().map(|r| r.area.unwrap_or(0.0)).collect();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    0.5 * (v[(k - 1) / 2] + v[k / 2])
}

fn averaging_improvement() -> Check {
    let seeds: Vec<u64> = (0..20).collect();
    let averaged = run_sweep(
        &demo_config(9).map_err(|e| e.to_string())?,
        &seeds,
        &[],
        &[],
    )
    .map_err(|e| e.to_string())?;
    let single = run_sweep(
        &example9_single_config().map_err(|e| e.to_string())?,
        &seeds,
        &[],
        &[],
    )
    .map_err(|e| e.to_string())?;
    let (a, s) = (median_area(&averaged), median_area(&single));
    let ok = |rows: &[SweepRow]| rows.iter().filter(|r| r.status == "ok").count();
    ensure(a > s, format!("median area {a} (N = 10) vs {s} (N = 1)"))?;
    Ok(format!(
        "median area {a:.4} with N = 10 ({}/20 ok) vs {s:.4} with N = 1 ({}/20 ok)",
        ok(&averaged),
        ok(&single)
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        (
            "pendulum sine term cancelled exactly",
            pendulum_cancellation,
        ),
        ("cubic term cancelled exactly", cubic_cancellation),
        (
            "minimum-norm optimum 0.2 and exact design infeasible",
            minimum_norm,
        ),
        (
            "attraction estimate inside the exact region",
            exact_roa_containment,
        ),
        ("averaged-noise probability bound", probability_formula),
        ("output normal form forced entries", normal_form),
        ("robust pendulum design over 100 seeds", robust_pipeline),
        ("uncertain inequality soundness", petersen_soundness),
        (
            "parametrization feasibility on random plants",
            parametrization_feasibility,
        ),
        ("decrement evaluators against simulation", decrement_oracles),
        (
            "averaging enlarges the invariant set",
            averaging_improvement,
        ),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (title, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {title}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {title}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}
