//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use floquet_core::bundle::{principal_fiber, OrbitFibers};
use floquet_core::hilbert::hilbert_metric;
use floquet_core::positivity::{approximate_global_positive, bundle_membership_test, uniqueness_test};
use floquet_core::separation::{estimate_separation, SeparationEstimate, SeparationOptions};
use floquet_core::*;
use floquet_sep::config::load_config;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Eigenvalues of a `W`-self-adjoint matrix through the symmetric
/// similarity `W^{1/2} M W^{-1/2}`, ascending.
fn weighted_symmetric_eigenvalues(m: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let s = DMatrix::from_fn(n, n, |i, j| w[i].sqrt() * m[(i, j)] / w[j].sqrt());
    let sym = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::INFINITY;
    for _ in 0..20 {
        let a1 = rng.random_range(0.1..5.0);
        let a2 = rng.random_range(0.0..0.09);
        let k = rng.random_range(1.0..8.0);
        let c0 = rng.random_range(0.0..10.0);
        let c1 = rng.random_range(0.0..1.0);
        let mesh = SpatialMesh::interval(1.0, 201).map_err(|e| e.to_string())?;
        let op = EllipticOperator::from_profiles(
            mesh,
            |p| a1 + a2 * (k * p[0]).sin(),
            |p| c0 * (1.0 - p[0]) + c1 * p[0],
        )
        .map_err(|e| e.to_string())?;
        // the assembled matrix is the negative semidefinite one
        let ev = weighted_symmetric_eigenvalues(&(-op.to_dense()), op.mesh().weights());
        worst = worst.min(ev[0]);
    }
    let elapsed = start.elapsed();
    check(
        worst >= -1e-10 && elapsed < Duration::from_secs(30),
        format!("min eigenvalue {worst:.3e} over 20 Robin scenarios, {elapsed:.2?}"),
    )
}

fn heat(n: usize) -> Result<Propagator, Error> {
    let mesh = SpatialMesh::interval(1.0, n)?;
    let field = CoefficientField::constant(&mesh, 0.0);
    Propagator::new(EllipticOperator::uniform(mesh, 1.0, 0.0)?, field, PropagatorConfig::new(1e-3)?)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut mus = Vec::new();
    let mut worst: f64 = 0.0;
    for n in [101, 201, 401] {
        let p = heat(n).map_err(|e| e.to_string())?;
        let b = p.field().origin();
        let est = estimate_separation(&p, std::slice::from_ref(&b), 2, &SeparationOptions::default()).map_err(|e| e.to_string())?;
        let m = p.time_one_map(&b).map_err(|e| e.to_string())?;
        let ev = weighted_symmetric_eigenvalues(&m, p.mesh().weights());
        let oracle = (ev[n - 1] / ev[n - 2]).ln();
        worst = worst.max((est.mu / oracle - 1.0).abs());
        mus.push(est.mu);
    }
    let extrapolated = mus[2] + (mus[2] - mus[1]) / 3.0;
    let pi2 = PI * PI;
    let rel = (extrapolated / pi2 - 1.0).abs();
    let elapsed = start.elapsed();
    check(
        worst < 5e-3 && rel < 1e-2 && elapsed < Duration::from_secs(60),
        format!(
            "mu = {:.6}/{:.6}/{:.6}, max deviation from dense gap {worst:.2e}, extrapolated {extrapolated:.5} ({:.2}% from pi^2), {elapsed:.2?}",
            mus[0],
            mus[1],
            mus[2],
            100.0 * rel
        ),
    )
}

fn criterion_3() -> Outcome {
    let mesh = SpatialMesh::interval(1.0, 101).map_err(|e| e.to_string())?;
    let field = CoefficientField::periodic(&mesh, &Profile::constant(1.0), 1.0).map_err(|e| e.to_string())?;
    let op = EllipticOperator::uniform(mesh, 1.0, 0.0).map_err(|e| e.to_string())?;
    let p = Propagator::new(op, field, PropagatorConfig::new(1e-3).unwrap()).map_err(|e| e.to_string())?;
    let (mut growth_err, mut v_err): (f64, f64) = (0.0, 0.0);
    for b in p.field().hull_sample(8, SampleMode::Grid, 0) {
        let f = principal_fiber(&p, &b, 1e-12, 512).map_err(|e| e.to_string())?;
        growth_err = growth_err.max((f.growth.exp() - 1.0).abs());
        let diff: Vec<f64> = f.v.iter().map(|x| x - 1.0).collect();
        v_err = v_err.max(p.mesh().l1_norm(&diff));
    }
    check(
        growth_err < 1e-6 && v_err < 1e-8,
        format!("growth factor error {growth_err:.2e}, L1 distance of v from constant {v_err:.2e} at 8 phases"),
    )
}

struct Periodic {
    prop: Propagator,
    phase: HullPoint,
    est: SeparationEstimate,
}

fn periodic_scenario() -> Result<Periodic, String> {
    let cfg = load_config(&repo_root().join("scenarios/periodic.toml")).map_err(|e| e.to_string())?;
    let prop = cfg.build_propagator().map_err(|e| e.to_string())?;
    let phase = cfg.phase(prop.field().modes());
    let s = &cfg.experiment.separation;
    let samples = prop.field().hull_sample(16, SampleMode::Grid, 0);
    let opts = SeparationOptions {
        k_max: 12,
        k_min: s.k_min,
        trials: s.trials,
        ..SeparationOptions::default()
    };
    let est = estimate_separation(&prop, &samples, 4, &opts).map_err(|e| e.to_string())?;
    Ok(Periodic { prop, phase, est })
}

fn criterion_4(sc: &Periodic) -> Outcome {
    let e = &sc.est;
    let ratio = e.residual_ratio();
    check(
        ratio < 0.05 && e.lambda > 0.0 && e.lambda < 1.0 && e.contraction <= 1.05 * e.lambda,
        format!(
            "lambda {:.5}, residual {:.2}% of slope, contraction {:.4} (limit {:.4})",
            e.lambda,
            100.0 * ratio,
            e.contraction,
            1.05 * e.lambda
        ),
    )
}

fn criterion_5(sc: &Periodic) -> Outcome {
    let p = &sc.prop;
    let n = p.len();
    let lambda = sc.est.lambda;
    let fiber = principal_fiber(p, &sc.phase, 1e-10, 512).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let ladder = [2.0, 4.0, 8.0, 16.0];
    let exec = Execution::default();
    let mut problems = Vec::new();
    let (mut worst_rate, mut worst_osc): (f64, f64) = (0.0, 0.0);
    let mut first = None;
    for j in 0..5 {
        let sa = uniform(&mut rng, n, 0.0, 1.0);
        let sb = uniform(&mut rng, n, 0.0, 1.0);
        let rep = uniqueness_test(p, &fiber, &sa, &sb, &ladder, 1.0, exec).map_err(|e| e.to_string())?;
        if !rep.strictly_decreasing() {
            problems.push(format!("pair {j}: osc not strictly decreasing"));
        }
        match rep.decay_rate {
            Some(r) => worst_rate = worst_rate.max((r / lambda - 1.0).abs()),
            None => problems.push(format!("pair {j}: no decay rate")),
        }
        worst_osc = worst_osc.max(rep.rows.last().unwrap().osc_t0);
        if first.is_none() {
            first = Some((sa, sb, rep.kappa));
        }
    }
    if worst_rate > 0.2 {
        problems.push(format!("rate deviation {worst_rate:.3}"));
    }
    if worst_osc >= 1e-6 {
        problems.push(format!("osc(16) = {worst_osc:.2e}"));
    }

    let (sa, sb, kappa) = first.unwrap();
    let scaled: Vec<f64> = sa.iter().map(|x| 3.7 * x).collect();
    let at16 = |a: &[f64], b: &[f64]| {
        uniqueness_test(p, &fiber, a, b, &[16.0], 1.0, exec).map(|r| r.kappa).map_err(|e| e.to_string())
    };
    let scale_err = (at16(&scaled, &sb)? / (3.7 * kappa) - 1.0).abs();
    let swap_err = (at16(&sb, &sa)? * kappa - 1.0).abs();
    if scale_err > 1e-12 {
        problems.push(format!("scale equivariance {scale_err:.2e}"));
    }
    if swap_err > 1e-10 {
        problems.push(format!("swap inversion {swap_err:.2e}"));
    }
    let detail = format!(
        "5 pairs, rate deviation {:.2}%, max osc(16) {worst_osc:.2e}, scale {scale_err:.1e}, swap {swap_err:.1e}",
        100.0 * worst_rate
    );
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn criterion_6(sc: &Periodic) -> Outcome {
    let p = &sc.prop;
    let lambda = sc.est.lambda;
    let predicted = lambda.powi(4);
    let orbit = OrbitFibers::compute(p, &sc.phase, 1.0, 1, 1e-10, 512).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let stride = p.config().steps_per_unit();
    let mut factors = Vec::new();
    for _ in 0..3 {
        let seed = uniform(&mut rng, p.len(), 0.0, 1.0);
        let mut defects = Vec::new();
        for t_back in [4.0, 8.0] {
            let g = approximate_global_positive(p, &sc.phase, t_back, &seed, 1.0, stride).map_err(|e| e.to_string())?;
            let rows = bundle_membership_test(p, &g, &orbit).map_err(|e| e.to_string())?;
            defects.push(rows[0].1);
        }
        factors.push(defects[1] / defects[0]);
    }
    let ok = factors.iter().all(|&f| f >= predicted / 2.0 && f <= 2.0 * predicted);
    check(
        ok,
        format!(
            "factors {} against lambda^4 = {predicted:.4e}",
            factors.iter().map(|f| format!("{f:.4e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn small_scenario() -> Result<Propagator, Error> {
    let mesh = SpatialMesh::interval(1.0, 21)?;
    let field = CoefficientField::from_profiles(
        &mesh,
        FieldKind::QuasiPeriodic,
        &Profile::constant(0.3),
        &[Profile::cos_kx(0.8, PI), Profile::cos_kx(0.5, 2.0 * PI)],
        &[1.0, 2f64.sqrt()],
    )?;
    let op = EllipticOperator::from_profiles(mesh, |p| 0.4 + 0.2 * (3.0 * p[0]).sin(), |_| 0.7)?;
    Propagator::new(op, field, PropagatorConfig::with_steps_per_unit(50))
}

fn criterion_7() -> Outcome {
    const TRIALS: usize = 1000;
    let p = small_scenario().map_err(|e| e.to_string())?;
    let n = p.len();
    let q = p.config().steps_per_unit();
    let dt = p.dt();
    let mesh = p.mesh();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut failures = [0usize; 5];
    let mut worst = [0.0f64; 5];
    let run = |r: Result<(), Error>| r.map_err(|e| e.to_string());
    for _ in 0..TRIALS {
        let b = HullPoint::new(uniform(&mut rng, 2, 0.0, 1.0));
        let t = rng.random_range(1..=q) as f64 * dt;

        // positivity from a sparse nonnegative state
        let mut u: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { rng.random_range(0.0..1.0) } else { 0.0 }).collect();
        let node = rng.random_range(0..n);
        u[node] = 1.0;
        run(p.evolve(&b, 0.0, t, &mut u))?;
        let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            failures[0] += 1;
        }

        // linearity
        let x = uniform(&mut rng, n, -1.0, 1.0);
        let y = uniform(&mut rng, n, -1.0, 1.0);
        let (alpha, beta) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let mut combo: Vec<f64> = x.iter().zip(&y).map(|(a, c)| alpha * a + beta * c).collect();
        let (mut px, mut py) = (x.clone(), y.clone());
        run(p.evolve(&b, 0.0, t, &mut px))?;
        run(p.evolve(&b, 0.0, t, &mut py))?;
        run(p.evolve(&b, 0.0, t, &mut combo))?;
        let scale = px.iter().chain(&py).fold(0.0f64, |m, v| m.max(v.abs())) * (alpha.abs() + beta.abs());
        let err = combo
            .iter()
            .zip(px.iter().zip(&py))
            .fold(0.0f64, |m, (c, (a, d))| m.max((c - alpha * a - beta * d).abs()))
            / scale;
        worst[1] = worst[1].max(err);
        if err > 1e-12 {
            failures[1] += 1;
        }

        // duality ⟨w, ψu⟩ = ⟨ψ*w, u⟩
        let w = uniform(&mut rng, n, -1.0, 1.0);
        let mut pw = w.clone();
        run(p.evolve_adjoint(&b, 0.0, t, &mut pw))?;
        let lhs = mesh.pairing(&w, &px);
        let rhs = mesh.pairing(&pw, &x);
        let size = mesh.pairing(&w.iter().map(|v| v.abs()).collect::<Vec<_>>(), &px.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let err = (lhs - rhs).abs() / size;
        worst[2] = worst[2].max(err);
        if err > 1e-12 {
            failures[2] += 1;
        }

        // cocycle on the step grid
        let k1 = rng.random_range(0..=q);
        let k2 = rng.random_range(0..=q);
        let err = p.verify_cocycle(&b, k1 as f64 * dt, k2 as f64 * dt, &x).map_err(|e| e.to_string())?;
        worst[3] = worst[3].max(err);
        if err > 1e-10 {
            failures[3] += 1;
        }

        // Birkhoff non-expansion
        let u0 = uniform(&mut rng, n, 0.01, 1.0);
        let w0 = uniform(&mut rng, n, 0.01, 1.0);
        let (mut u1, mut w1) = (u0.clone(), w0.clone());
        run(p.evolve(&b, 0.0, t, &mut u1))?;
        run(p.evolve(&b, 0.0, t, &mut w1))?;
        let (before, after) = (hilbert_metric(&u0, &w0), hilbert_metric(&u1, &w1));
        worst[4] = worst[4].max(after / before);
        if !(after <= before * (1.0 + 1e-12)) {
            failures[4] += 1;
        }
    }
    check(
        failures.iter().all(|&f| f == 0),
        format!(
            "{TRIALS} trials each, failures {failures:?}; linearity {:.1e}, duality {:.1e}, cocycle {:.1e}, max Hilbert ratio {:.3}",
            worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn criterion_8() -> Outcome {
    let config = repo_root().join("scenarios/periodic.toml");
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_floquet-sep"))
            .args(["all", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(d.path())
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run exited with {status}"));
        }
    }
    let csvs = |dir: &Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                out.push((name, std::fs::read(&path).map_err(|e| e.to_string())?));
            }
        }
        out.sort();
        Ok(out)
    };
    let (a, b) = (csvs(dirs[0].path())?, csvs(dirs[1].path())?);
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        a.len() == b.len() && !a.is_empty() && differing.is_empty(),
        format!("{} CSV files compared, differing: {differing:?}", a.len()),
    )
}

fn main() -> ExitCode {
    // `cargo test` passes filter and harness flags; `--list` must not run
    // the suite.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let mut results: Vec<(usize, Outcome)> = vec![(1, criterion_1()), (2, criterion_2()), (3, criterion_3())];
    match periodic_scenario() {
        Ok(sc) => {
            results.push((4, criterion_4(&sc)));
            results.push((5, criterion_5(&sc)));
            results.push((6, criterion_6(&sc)));
        }
        Err(e) => {
            for c in 4..=6 {
                results.push((c, Err(format!("periodic scenario failed: {e}"))));
            }
        }
    }
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));

    let mut failed = 0;
    for (c, r) in &results {
        match r {
            Ok(d) => println!("criterion {c}: PASS  {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {c}: FAIL  {d}");
            }
        }
    }
    println!("acceptance: {}/{} passed in {:.1?}", results.len() - failed, results.len(), start.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
