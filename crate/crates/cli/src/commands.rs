use std::path::{Path, PathBuf};
use std::time::Instant;

use constrained_dynamics::diagnostics::{
    self, check_b_structure, check_converse_dalembert, check_energy, check_first_integral,
    check_reparameterization, check_virtual_work, dimension_sweep, random_points,
    random_points_on_constraint, tol, CheckResult, DiagnosticReport, SweepTable,
};
use constrained_dynamics::integrator::IntegrationStats;
use constrained_dynamics::{
    integrate, project_onto_constraint, DynamicsError, IntegrationFailure, PhasePoint, Trajectory,
};
use serde::Serialize;

use crate::config::{self, tolerance_for, ConfigError, Scenario, ScenarioConfig};
use crate::output::{csv_header, fmt_f64, to_json, write_csv, write_csv_header, write_json};

/// Process exit status. Larger values win when several scenarios run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Success = 0,
    CheckFailure = 1,
    ConfigError = 2,
    IntegrationError = 3,
}

impl Outcome {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub output_dir: Option<&'a Path>,
    pub seed: Option<u64>,
    /// Adds wall-clock time to summaries, which makes them nondeterministic.
    pub wall_clock: bool,
}

#[derive(Serialize)]
struct ErrorInfo {
    kind: String,
    message: String,
    /// Time at which the failure was detected, when known.
    t: Option<f64>,
    last_valid_t: Option<f64>,
}

impl ErrorInfo {
    fn new(cause: &DynamicsError, last: Option<&PhasePoint>) -> Self {
        let t = match cause {
            DynamicsError::DomainExit { t, .. } | DynamicsError::StepUnderflow { t, .. } => Some(*t),
            _ => None,
        };
        Self {
            kind: cause.kind().to_string(),
            message: cause.to_string(),
            t,
            last_valid_t: last.map(|z| z.t),
        }
    }
}

#[derive(Serialize)]
struct Timings {
    #[serde(flatten)]
    stats: IntegrationStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_clock_seconds: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    system: &'a str,
    status: &'static str,
    trajectory: String,
    samples: usize,
    t_start: f64,
    t_final: Option<f64>,
    max_constraint_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_max_error: Option<f64>,
    warnings: &'a [String],
    timings: Timings,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorInfo>,
    config: &'a ScenarioConfig,
}

#[derive(Serialize)]
struct Report<'a> {
    status: &'static str,
    #[serde(flatten)]
    report: &'a DiagnosticReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepTable>,
    timings: Timings,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorInfo>,
    config: &'a ScenarioConfig,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

fn load(path: &Path, opts: &RunOptions) -> Result<Scenario, ConfigError> {
    let cfg = config::load(path)?;
    config::build(cfg, &stem(path), opts.output_dir, opts.seed)
}

fn report_io(path: &Path, e: std::io::Error) -> Outcome {
    eprintln!("error: cannot write {}: {e}", path.display());
    Outcome::ConfigError
}

fn oracle_error(sc: &Scenario, traj: &Trajectory) -> Option<f64> {
    let oracle = sc.oracle.as_ref()?;
    let t0 = sc.z0.t;
    let mut worst: f64 = 0.0;
    for z in traj.points() {
        let (x, v) = oracle.eval(z.t - t0)?;
        worst = worst.max((&z.x - x).amax()).max((&z.v - v).amax());
    }
    Some(worst)
}

enum Run {
    Done(Trajectory),
    Failed {
        partial: Option<Trajectory>,
        cause: DynamicsError,
    },
}

fn run_trajectory(sc: &Scenario) -> Run {
    let cfg = &sc.config;
    let z0 = if cfg.initial.project {
        match project_onto_constraint(&sc.system, &sc.z0, &cfg.integrator) {
            Ok(z) => z,
            Err(cause) => return Run::Failed { partial: None, cause },
        }
    } else {
        sc.z0.clone()
    };
    match integrate(&sc.system, &z0, cfg.time.t_end, &cfg.integrator, &sc.observers) {
        Ok(t) => Run::Done(t),
        Err(IntegrationFailure { partial, cause }) => Run::Failed {
            partial: Some(partial),
            cause,
        },
    }
}

pub fn simulate(path: &Path, opts: &RunOptions) -> Outcome {
    let sc = match load(path, opts) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return Outcome::ConfigError;
        }
    };
    let started = Instant::now();
    let run = run_trajectory(&sc);
    let elapsed = started.elapsed().as_secs_f64();

    let space = sc.system.space();
    let (dim_x, dim_y) = (space.dim_x(), space.dim_y());
    let (traj, error) = match &run {
        Run::Done(t) => (Some(t), None),
        Run::Failed { partial, cause } => {
            let last = partial.as_ref().and_then(|p| p.last());
            let info = ErrorInfo::new(cause, last);
            match info.last_valid_t {
                Some(t) => eprintln!("error: {}: {cause} (last valid t = {t})", path.display()),
                None => eprintln!("error: {}: {cause}", path.display()),
            }
            (partial.as_ref(), Some(info))
        }
    };

    let written = match traj {
        Some(t) => write_csv(&sc.trajectory_path, t, dim_x, dim_y),
        None => {
            let names: Vec<String> = sc.observers.iter().map(|o| o.name().to_string()).collect();
            write_csv_header(&sc.trajectory_path, &csv_header(dim_x, dim_y, &names))
        }
    };
    if let Err(e) = written {
        return report_io(&sc.trajectory_path, e);
    }

    let empty: [String; 0] = [];
    let summary = Summary {
        system: sc.system.name(),
        status: if error.is_some() { "error" } else { "ok" },
        trajectory: sc.trajectory_path.display().to_string(),
        samples: traj.map_or(0, |t| t.len()),
        t_start: sc.z0.t,
        t_final: traj.and_then(|t| t.last()).map(|z| z.t),
        max_constraint_norm: traj.map_or(f64::NAN, |t| t.max_constraint_norm()),
        oracle_max_error: traj.and_then(|t| oracle_error(&sc, t)),
        warnings: traj.map_or(&empty[..], |t| &t.warnings[..]),
        timings: Timings {
            stats: traj.map(|t| t.stats).unwrap_or_default(),
            wall_clock_seconds: opts.wall_clock.then_some(elapsed),
        },
        error,
        config: &sc.config,
    };
    if let Err(e) = write_json(&sc.summary_path, &summary) {
        return report_io(&sc.summary_path, e);
    }
    match run {
        Run::Done(_) => Outcome::Success,
        Run::Failed { .. } => Outcome::IntegrationError,
    }
}

fn phi_drift(traj: &Trajectory, tolerance: f64) -> CheckResult {
    let drift: Vec<f64> = match traj.samples.first() {
        Some(s0) => traj
            .samples
            .iter()
            .map(|s| (&s.constraint - &s0.constraint).amax())
            .collect(),
        None => Vec::new(),
    };
    CheckResult::from_violations(diagnostics::FIRST_INTEGRAL, &drift, tolerance)
}

fn run_checks(
    sc: &Scenario,
    traj: &Trajectory,
    report: &mut DiagnosticReport,
) -> Result<Option<SweepTable>, DynamicsError> {
    let cfg = &sc.config;
    let system = &sc.system;
    let count = cfg.checks.points;
    let mut pointwise: Option<Vec<PhasePoint>> = None;
    let mut sweep = None;
    for name in &sc.suite {
        let tolerance = tolerance_for(cfg, name);
        match name.as_str() {
            diagnostics::VIRTUAL_WORK | diagnostics::B_STRUCTURE => {
                let points = pointwise.get_or_insert_with(|| random_points(system, count, cfg.seed));
                report
                    .metadata
                    .insert("random_points".into(), points.len().to_string());
                report.push(if name == diagnostics::VIRTUAL_WORK {
                    check_virtual_work(system, points, tolerance)?
                } else {
                    check_b_structure(system, points, tolerance)?
                });
            }
            diagnostics::FIRST_INTEGRAL => {
                report.push(phi_drift(traj, tolerance));
                if let Some(q) = sc.quadric.as_ref().filter(|q| q.omega().is_some()) {
                    let space = system.space();
                    let omega_tol = cfg
                        .checks
                        .tolerance
                        .get(name)
                        .copied()
                        .unwrap_or(tol::FIRST_INTEGRAL);
                    report.push(check_first_integral(
                        traj,
                        "first-integral/rotation",
                        |z| q.rotation_integral(space, z).unwrap_or(f64::NAN),
                        omega_tol,
                    )?);
                }
            }
            diagnostics::ENERGY => report.push(check_energy(traj, system.space(), tolerance)?),
            diagnostics::REPARAMETERIZATION => {
                let points =
                    random_points_on_constraint(system, count, cfg.seed.wrapping_add(1), &cfg.integrator);
                report
                    .metadata
                    .insert("points_on_constraint".into(), points.len().to_string());
                report.push(check_reparameterization(system, &points, tolerance)?);
            }
            diagnostics::CONVERSE_DALEMBERT => {
                for c in check_converse_dalembert(system, traj, tolerance)? {
                    report.push(c);
                }
            }
            diagnostics::DIMENSION_SWEEP => {
                if let Some((template, dims)) = &sc.sweep {
                    let span = cfg.time.t_end - cfg.time.t0;
                    let table = dimension_sweep(*template, dims, &cfg.integrator, span, |z| z.x[0])?;
                    report.push(table.as_check(tolerance));
                    sweep = Some(table);
                }
            }
            other => unreachable!("unvalidated check {other}"),
        }
    }
    Ok(sweep)
}

pub fn verify(path: &Path, opts: &RunOptions) -> Outcome {
    let sc = match load(path, opts) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return Outcome::ConfigError;
        }
    };
    let started = Instant::now();
    let mut report = DiagnosticReport::new(sc.system.name());
    report.metadata.insert("seed".into(), sc.config.seed.to_string());

    let (outcome, sweep, error, stats) = match run_trajectory(&sc) {
        Run::Done(traj) => {
            report.metadata.insert("samples".into(), traj.len().to_string());
            if let Some(e) = oracle_error(&sc, &traj) {
                report.metadata.insert("oracle_max_error".into(), fmt_f64(e));
            }
            match run_checks(&sc, &traj, &mut report) {
                Ok(sweep) => {
                    let failing: Vec<&str> = report.failing().map(|c| c.name.as_str()).collect();
                    if failing.is_empty() {
                        (Outcome::Success, sweep, None, traj.stats)
                    } else {
                        for c in report.failing() {
                            eprintln!(
                                "check failed: {}: {}: max violation {} exceeds tolerance {}",
                                path.display(),
                                c.name,
                                fmt_f64(c.max_violation),
                                fmt_f64(c.tolerance)
                            );
                        }
                        (Outcome::CheckFailure, sweep, None, traj.stats)
                    }
                }
                Err(cause) => {
                    eprintln!("error: {}: {cause}", path.display());
                    (
                        Outcome::IntegrationError,
                        None,
                        Some(ErrorInfo::new(&cause, None)),
                        traj.stats,
                    )
                }
            }
        }
        Run::Failed { partial, cause } => {
            let last = partial.as_ref().and_then(|p| p.last());
            eprintln!("error: {}: {cause}", path.display());
            let info = ErrorInfo::new(&cause, last);
            let stats = partial.map(|p| p.stats).unwrap_or_default();
            (Outcome::IntegrationError, None, Some(info), stats)
        }
    };

    let out = Report {
        status: match outcome {
            Outcome::Success => "pass",
            Outcome::CheckFailure => "fail",
            _ => "error",
        },
        report: &report,
        sweep,
        timings: Timings {
            stats,
            wall_clock_seconds: opts.wall_clock.then(|| started.elapsed().as_secs_f64()),
        },
        error,
        config: &sc.config,
    };
    if let Err(e) = write_json(&sc.report_path, &out) {
        return report_io(&sc.report_path, e);
    }
    outcome
}

#[derive(Serialize)]
struct SystemEntry {
    name: &'static str,
    kind: &'static str,
    parameters: &'static [&'static str],
}

#[derive(Serialize)]
struct Registry {
    systems: Vec<SystemEntry>,
    checks: Vec<&'static str>,
    observers: Vec<&'static str>,
}

fn registry() -> Registry {
    use constrained_dynamics::models::{ENERGY_OSCILLATOR, LAGRANGE, QUADRIC_GEODESIC};
    Registry {
        systems: vec![
            SystemEntry {
                name: QUADRIC_GEODESIC,
                kind: "quadric",
                parameters: &[
                    "dim",
                    "w = \"identity\" | \"diag\" | rows",
                    "omega = rows (optional)",
                ],
            },
            SystemEntry {
                name: ENERGY_OSCILLATOR,
                kind: "oscillator",
                parameters: &["dim", "weights = \"unit\" | \"gaussian\"", "c1", "c2"],
            },
            SystemEntry {
                name: LAGRANGE,
                kind: "lagrange",
                parameters: &[
                    "g = rows",
                    "stiffness = rows (optional)",
                    "damping = rows (optional)",
                    "force (optional)",
                    "constraint = { a, b, c }",
                ],
            },
        ],
        checks: config::check_names(),
        observers: config::OBSERVERS.to_vec(),
    }
}

pub fn list(json: bool) -> Outcome {
    let reg = registry();
    if json {
        match to_json(&reg) {
            Ok(s) => print!("{s}"),
            Err(e) => {
                eprintln!("error: {e}");
                return Outcome::ConfigError;
            }
        }
        return Outcome::Success;
    }
    println!("systems:");
    for s in &reg.systems {
        println!(
            "  {:<18} kind = \"{}\"; {}",
            s.name,
            s.kind,
            s.parameters.join(", ")
        );
    }
    println!("checks:");
    for c in &reg.checks {
        println!("  {c}");
    }
    println!("observers:");
    for o in &reg.observers {
        println!("  {o}");
    }
    Outcome::Success
}

/// Runs `f` over every config, on `jobs` worker threads.
pub fn fan_out<F>(configs: &[PathBuf], jobs: usize, f: F) -> Outcome
where
    F: Fn(&Path) -> Outcome + Sync,
{
    use rayon::prelude::*;
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: --jobs: {e}");
            return Outcome::ConfigError;
        }
    };
    pool.install(|| configs.par_iter().map(|p| f(p)).max().unwrap_or(Outcome::Success))
}
