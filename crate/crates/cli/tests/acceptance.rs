//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use constrained_dynamics::diagnostics::{
    check_b_structure, check_converse_dalembert, check_energy, check_first_integral,
    check_reparameterization, check_virtual_work, random_points, random_points_on_constraint, tol,
};
use constrained_dynamics::models::{
    affine_constraint, build_energy_oscillator, build_lagrange_system, build_quadric_geodesic,
    gaussian_l2_space, LagrangeData, QuadricSpec,
};
use constrained_dynamics::{
    constrained_acceleration, integrate, reaction_force, IntegratorConfig, LinearMap, PhasePoint, Projection,
    SpaceSpec, SystemModel, Trajectory,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e(n: usize, k: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| f64::from(i == k))
}

fn sphere(n: usize) -> SystemModel {
    build_quadric_geodesic(&QuadricSpec::sphere(n), &SpaceSpec::euclidean(n, 1).unwrap()).unwrap()
}

fn quadric(w: DMatrix<f64>) -> (SystemModel, QuadricSpec) {
    let n = w.nrows();
    let spec = QuadricSpec::new(LinearMap::new(w).unwrap(), None).unwrap();
    let sys = build_quadric_geodesic(&spec, &SpaceSpec::euclidean(n, 1).unwrap()).unwrap();
    (sys, spec)
}

fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    a.transpose() * &a / n as f64 + DMatrix::identity(n, n) * 0.5
}

/// Three masses, two springs, and one velocity constraint.
fn lagrange_system() -> SystemModel {
    let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]);
    let k = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
    let a = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.5]);
    let data = LagrangeData::quadratic(g, k);
    build_lagrange_system(
        data,
        affine_constraint(a, None, None).unwrap(),
        &SpaceSpec::euclidean(3, 1).unwrap(),
    )
    .unwrap()
}

fn weighted(space: &SpaceSpec, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    space
        .weights()
        .iter()
        .zip(u.iter().zip(v.iter()))
        .map(|(w, (a, b))| w * a * b)
        .sum()
}

fn max_rel_error<F>(sys: &SystemModel, points: &[PhasePoint], oracle: F) -> f64
where
    F: Fn(&PhasePoint) -> DVector<f64>,
{
    points
        .iter()
        .map(|z| {
            let a = constrained_acceleration(sys, z).unwrap();
            let o = oracle(z);
            (&a - &o).norm() / o.norm().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

fn c1_quadric_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in [2, 3, 10, 50] {
        let diag = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| (i + 1) as f64));
        for w in [DMatrix::identity(n, n), diag, random_spd(n, 100 + n as u64)] {
            let (sys, _) = quadric(w.clone());
            let points = random_points(&sys, 100, 7 + n as u64);
            if points.len() != 100 {
                return Err(format!("only {} valid points at dim {n}", points.len()));
            }
            let err = max_rel_error(&sys, &points, |z| {
                let wx = &w * &z.x;
                -&wx * (z.v.dot(&(&w * &z.v)) / wx.norm_squared())
            });
            worst = worst.max(err);
            cases += 1;
        }
    }
    ensure(
        worst <= 1e-12,
        format!("{cases} cases x 100 points, max relative error {worst:.2e}"),
    )
}

fn c2_oscillator_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [1, 4, 32] {
        for space in [SpaceSpec::euclidean(n, 1).unwrap(), gaussian_l2_space(n).unwrap()] {
            let sys = build_energy_oscillator(&space).unwrap();
            let points = random_points(&sys, 100, 11 + n as u64);
            if points.len() != 100 {
                return Err(format!("only {} valid points at dim {n}", points.len()));
            }
            let err = max_rel_error(&sys, &points, |z| {
                -&z.v * (weighted(&space, &z.x, &z.v) / weighted(&space, &z.v, &z.v))
            });
            worst = worst.max(err);
        }
    }
    ensure(
        worst <= 1e-12,
        format!("6 cases x 100 points, max relative error {worst:.2e}"),
    )
}

struct OracleRun {
    traj: Trajectory,
    error: f64,
    elapsed: Duration,
}

fn sphere_run(config: &IntegratorConfig) -> OracleRun {
    let sys = sphere(3);
    let (x0, v0) = (e(3, 0), e(3, 1));
    let started = Instant::now();
    let traj = integrate(
        &sys,
        &PhasePoint::new(0.0, x0.clone(), v0.clone()).unwrap(),
        2.0 * PI,
        config,
        &[],
    )
    .unwrap();
    let elapsed = started.elapsed();
    let error = traj
        .points()
        .map(|z| (&z.x - (&x0 * z.t.cos() + &v0 * z.t.sin())).amax())
        .fold(0.0, f64::max);
    OracleRun { traj, error, elapsed }
}

fn oscillator_run(config: &IntegratorConfig) -> OracleRun {
    let sys = build_energy_oscillator(&SpaceSpec::euclidean(1, 1).unwrap()).unwrap();
    let started = Instant::now();
    let traj = integrate(
        &sys,
        &PhasePoint::from_slices(0.0, &[1.0], &[1.0]).unwrap(),
        FRAC_PI_8,
        config,
        &[],
    )
    .unwrap();
    let elapsed = started.elapsed();
    let error = traj
        .points()
        .map(|z| (z.x[0] - (z.t.sin() + z.t.cos())).abs())
        .fold(0.0, f64::max);
    OracleRun { traj, error, elapsed }
}

fn c3_oracle_trajectories() -> Outcome {
    let config = IntegratorConfig::rk4(1e-3);
    let s = sphere_run(&config);
    let o = oscillator_run(&config);
    let limit = Duration::from_secs(5);
    ensure(
        s.error <= 1e-8 && o.error <= 1e-8 && s.elapsed < limit && o.elapsed < limit,
        format!(
            "sphere {:.2e} in {:.2?} ({} samples), oscillator {:.2e} in {:.2?}",
            s.error,
            s.elapsed,
            s.traj.len(),
            o.error,
            o.elapsed
        ),
    )
}

fn c4_constraint_invariance() -> Outcome {
    let plain = IntegratorConfig::rk4(1e-3);
    let projected = plain.clone().with_projection(Projection::PostStep);
    let a = sphere_run(&plain).traj.max_constraint_norm();
    let b = oscillator_run(&plain).traj.max_constraint_norm();
    let c = sphere_run(&projected).traj.max_constraint_norm();
    let d = oscillator_run(&projected).traj.max_constraint_norm();
    ensure(
        a.max(b) <= 1e-10 && c.max(d) <= 1e-12,
        format!(
            "no projection {:.2e} / {:.2e}, post_step {:.2e} / {:.2e}",
            a, b, c, d
        ),
    )
}

fn c5_virtual_work() -> Outcome {
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]));
    let systems = [
        ("quadric", quadric(w).0),
        (
            "oscillator",
            build_energy_oscillator(&gaussian_l2_space(8).unwrap()).unwrap(),
        ),
        ("lagrange", lagrange_system()),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, sys) in systems {
        let points = random_points(&sys, 100, 5);
        let r = check_virtual_work(&sys, &points, tol::VIRTUAL_WORK).map_err(|e| e.to_string())?;
        ok &= r.pass && points.len() == 100;
        parts.push(format!("{name} {:.2e}", r.max_violation));
    }
    ensure(ok, parts.join(", "))
}

fn c6_first_integrals() -> Outcome {
    let config = IntegratorConfig::rk4(1e-3);
    let omega = LinearMap::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let spec = QuadricSpec::new(LinearMap::identity(3), Some(omega)).unwrap();
    let space = SpaceSpec::euclidean(3, 1).unwrap();
    let sys = build_quadric_geodesic(&spec, &space).unwrap();
    let z0 = PhasePoint::from_slices(0.0, &[1.0, 0.0, 0.0], &[0.0, 0.6, 0.8]).unwrap();
    let traj = integrate(&sys, &z0, 2.0 * PI, &config, &[]).map_err(|f| f.to_string())?;
    let rot = check_first_integral(
        &traj,
        "rotation",
        |z| spec.rotation_integral(&space, z).unwrap(),
        1e-8,
    )
    .map_err(|e| e.to_string())?;
    let e_sphere = check_energy(&traj, &space, 1e-8).map_err(|e| e.to_string())?;

    let (ellipse, _) = quadric(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])));
    let space2 = SpaceSpec::euclidean(2, 1).unwrap();
    let z1 = PhasePoint::from_slices(0.0, &[1.0, 0.0], &[0.0, 0.5]).unwrap();
    let traj2 = integrate(&ellipse, &z1, 2.0 * PI, &config, &[]).map_err(|f| f.to_string())?;
    let e_ellipse = check_energy(&traj2, &space2, 1e-8).map_err(|e| e.to_string())?;
    ensure(
        rot.pass && e_sphere.pass && e_ellipse.pass,
        format!(
            "(x, Omega v) drift {:.2e}, energy drift sphere {:.2e}, ellipse {:.2e}",
            rot.max_violation, e_sphere.max_violation, e_ellipse.max_violation
        ),
    )
}

fn c7_holonomic_invariance() -> Outcome {
    let (sys, spec) = quadric(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])));
    let space = SpaceSpec::euclidean(3, 1).unwrap();
    let z0 = PhasePoint::from_slices(0.0, &[1.0, 0.0, 0.0], &[0.0, 0.5, 0.3]).unwrap();
    let g0 = spec.level(&space, &z0.x);
    let traj =
        integrate(&sys, &z0, 2.0 * PI, &IntegratorConfig::rk4(1e-3), &[]).map_err(|f| f.to_string())?;
    let worst = traj
        .points()
        .map(|z| spec.level(&space, &z.x).abs())
        .fold(0.0, f64::max);
    ensure(
        g0 == 0.0 && worst <= 1e-8,
        format!("max |g(x(t))| = {worst:.2e} over {} samples", traj.len()),
    )
}

fn c8_reparameterization() -> Outcome {
    let config = IntegratorConfig::default();
    let systems = [
        ("quadric", quadric(random_spd(4, 3)).0),
        (
            "oscillator",
            build_energy_oscillator(&gaussian_l2_space(6).unwrap()).unwrap(),
        ),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, sys) in systems {
        let points = random_points_on_constraint(&sys, 50, 21, &config);
        let r = check_reparameterization(&sys, &points, 1e-12).map_err(|e| e.to_string())?;
        ok &= r.pass && points.len() == 50;
        parts.push(format!(
            "{name} {:.2e} on {} points",
            r.max_violation,
            points.len()
        ));
    }
    ensure(ok, parts.join(", "))
}

fn c9_converse() -> Outcome {
    let h = 1e-3;
    let grid = |n: usize| (0..=n).map(move |k| k as f64 * h);

    let sys = sphere(3);
    let (x0, v0) = (e(3, 0), e(3, 2) * 1.5);
    let pts: Vec<PhasePoint> = grid(2000)
        .map(|t| {
            let (s, c) = (1.5 * t).sin_cos();
            PhasePoint::new(t, &x0 * c + &v0 * (s / 1.5), &x0 * (-1.5 * s) + &v0 * c).unwrap()
        })
        .collect();
    let sphere_traj = Trajectory::from_points(&sys, pts, &[]).map_err(|e| e.to_string())?;
    let a = check_converse_dalembert(&sys, &sphere_traj, tol::CONVERSE).map_err(|e| e.to_string())?;

    let osc = build_energy_oscillator(&SpaceSpec::euclidean(1, 1).unwrap()).unwrap();
    let pts: Vec<PhasePoint> = grid(700)
        .map(|t| PhasePoint::from_slices(t, &[t.sin() + t.cos()], &[t.cos() - t.sin()]).unwrap())
        .collect();
    let osc_traj = Trajectory::from_points(&osc, pts, &[]).map_err(|e| e.to_string())?;
    let b = check_converse_dalembert(&osc, &osc_traj, tol::CONVERSE).map_err(|e| e.to_string())?;

    let all: Vec<_> = a.iter().chain(b.iter()).collect();
    let detail = all
        .iter()
        .map(|c| format!("{} {:.1e}/{:.1e}", c.name, c.max_violation, c.tolerance))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(all.iter().all(|c| c.pass), detail)
}

fn c10_b_structure() -> Outcome {
    let w = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 5.0]));
    let systems = [
        ("quadric", quadric(w).0),
        (
            "oscillator",
            build_energy_oscillator(&gaussian_l2_space(5).unwrap()).unwrap(),
        ),
        ("lagrange", lagrange_system()),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, sys) in systems {
        let points = random_points(&sys, 100, 9);
        let r = check_b_structure(&sys, &points, tol::B_STRUCTURE).map_err(|e| e.to_string())?;
        ok &= r.pass;
        parts.push(format!("{name} {:.2e}", r.max_violation));
    }

    // phi_v with dependent rows, and phi_v = 0.
    let affine = |rows: usize, a: &[f64]| {
        build_lagrange_system(
            LagrangeData::quadratic(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)),
            affine_constraint(
                DMatrix::from_row_slice(rows, 2, a),
                Some(DMatrix::identity(rows, 2)),
                None,
            )
            .unwrap(),
            &SpaceSpec::euclidean(2, rows).unwrap(),
        )
        .unwrap()
    };
    let z = PhasePoint::from_slices(0.0, &[0.1, 0.2], &[0.3, -0.3]).unwrap();
    for sys in [affine(2, &[1.0, 1.0, 2.0, 2.0]), affine(1, &[0.0, 0.0])] {
        let kind = match reaction_force(&sys, &z) {
            Ok(_) => "ok",
            Err(e) => e.kind(),
        };
        ok &= kind == "hypothesis-violation";
        parts.push(format!("rank-deficient -> {kind}"));
    }
    ensure(ok, parts.join(", "))
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdyn"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn c11_order_and_determinism() -> Outcome {
    let end_error = |h: f64| -> f64 {
        let sys = sphere(3);
        let z0 = PhasePoint::new(0.0, e(3, 0), e(3, 1)).unwrap();
        let traj = integrate(&sys, &z0, 2.0 * PI, &IntegratorConfig::rk4(h), &[]).unwrap();
        let z = traj.last().unwrap();
        (&z.x - (e(3, 0) * z.t.cos() + e(3, 1) * z.t.sin())).norm()
    };
    let ratio = end_error(1e-2) / end_error(5e-3);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        for (cmd, cfg) in [
            ("simulate", "sphere.toml"),
            ("verify", "gaussian_oscillator.toml"),
        ] {
            let status = cli()
                .args([cmd, "--seed", "42", "--output-dir"])
                .arg(dir.path())
                .arg(scenario(cfg))
                .status()
                .map_err(|e| e.to_string())?;
            if status.code() != Some(0) {
                return Err(format!("cdyn {cmd} {cfg} exited with {status}"));
            }
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir.path())
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        snapshots.push((files.len(), bytes));
    }
    let identical = snapshots[0] == snapshots[1];
    ensure(
        (14.0..=18.0).contains(&ratio) && identical && snapshots[0].0 == 3,
        format!(
            "error ratio {ratio:.3}, {} output files byte-identical: {identical}",
            snapshots[0].0
        ),
    )
}

fn c12_breakdown() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = cli()
        .arg("simulate")
        .arg("--output-dir")
        .arg(dir.path())
        .arg(scenario("oscillator_breakdown.toml"))
        .output()
        .map_err(|e| e.to_string())?;
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("oscillator_breakdown.summary.json"))
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let kind = summary["error"]["kind"].as_str().unwrap_or("none").to_string();
    let t = summary["error"]["t"].as_f64().unwrap_or(f64::NAN);
    let last = summary["error"]["last_valid_t"].as_f64().unwrap_or(f64::NAN);
    let rows = std::fs::read_to_string(dir.path().join("oscillator_breakdown.csv"))
        .map(|s| s.lines().count().saturating_sub(1))
        .unwrap_or(0);
    ensure(
        out.status.code() == Some(3) && kind == "domain-exit" && (t - FRAC_PI_4).abs() <= 1e-3 && rows > 0,
        format!(
            "exit {:?}, {kind} at t = {t:.6} (pi/4 = {FRAC_PI_4:.6}), last valid t = {last:.6}, {rows} rows written",
            out.status.code()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        (
            "reaction formula matches quadric geodesic field",
            c1_quadric_equivalence,
        ),
        (
            "reaction formula matches oscillator field",
            c2_oscillator_equivalence,
        ),
        ("rk4 trajectories match closed forms", c3_oracle_trajectories),
        ("constraint is a first integral", c4_constraint_invariance),
        ("reaction does no virtual work", c5_virtual_work),
        ("rotation and kinetic energy are conserved", c6_first_integrals),
        ("quadric surface is invariant", c7_holonomic_invariance),
        (
            "reaction is independent of the constraint parameterization",
            c8_reparameterization,
        ),
        (
            "finite-difference accelerations satisfy the converse check",
            c9_converse,
        ),
        (
            "b is symmetric positive definite; rank deficiency is reported",
            c10_b_structure,
        ),
        (
            "rk4 is fourth order; outputs are deterministic",
            c11_order_and_determinism,
        ),
        ("oscillator breaks down where x' vanishes", c12_breakdown),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let res = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match res {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
