//! Executable checks of the structural properties of ideal constraints,
//! evaluated over point sets and trajectories.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{DynamicsError, Result};
use crate::integrator::{integrate, project_onto_constraint, IntegratorConfig, Trajectory};
use crate::models::{
    build_energy_oscillator, build_quadric_geodesic, reparameterize_constraint, QuadricSpec,
    Reparameterization,
};
use crate::reaction::{
    constrained_acceleration, dalembert_residual, evaluate, kernel_basis, reaction_force, SystemModel,
    RANK_TOL,
};
use crate::space::{PhasePoint, SpaceSpec};

pub const VIRTUAL_WORK: &str = "virtual-work";
pub const FIRST_INTEGRAL: &str = "first-integral";
pub const ENERGY: &str = "energy";
pub const REPARAMETERIZATION: &str = "reparameterization";
pub const CONVERSE_DALEMBERT: &str = "converse-dalembert";
pub const DIMENSION_SWEEP: &str = "dimension-sweep";
pub const B_STRUCTURE: &str = "b-structure";

/// Names of every check, in reporting order.
pub const CHECK_NAMES: [&str; 6] = [
    VIRTUAL_WORK,
    FIRST_INTEGRAL,
    ENERGY,
    REPARAMETERIZATION,
    CONVERSE_DALEMBERT,
    DIMENSION_SWEEP,
];

/// Default tolerances.
pub mod tol {
    pub const VIRTUAL_WORK: f64 = 1e-10;
    pub const CONSTRAINT_INTEGRAL: f64 = 1e-10;
    pub const FIRST_INTEGRAL: f64 = 1e-8;
    pub const ENERGY: f64 = 1e-8;
    pub const REPARAMETERIZATION: f64 = 1e-12;
    pub const CONVERSE: f64 = 1e-10;
    pub const DIMENSION_SWEEP: f64 = 1e-12;
    pub const B_STRUCTURE: f64 = 1e-12;
    /// Points passed to the reparameterization check must satisfy
    /// `||phi|| <= ON_CONSTRAINT`.
    pub const ON_CONSTRAINT: f64 = 1e-10;
}

/// Number of worst-case locations kept per check.
const WORST_KEPT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Indices of the worst samples, worst first.
    pub locations: Vec<usize>,
}

impl CheckResult {
    /// Builds a result from per-location violations. NaN counts as an
    /// infinite violation.
    pub fn from_violations(name: impl Into<String>, violations: &[f64], tolerance: f64) -> Self {
        let clean: Vec<f64> = violations
            .iter()
            .map(|v| if v.is_nan() { f64::INFINITY } else { *v })
            .collect();
        let mut order: Vec<usize> = (0..clean.len()).collect();
        order.sort_by(|&i, &j| clean[j].total_cmp(&clean[i]).then(i.cmp(&j)));
        order.truncate(WORST_KEPT);
        let max_violation = clean.iter().copied().fold(0.0, f64::max);
        Self {
            name: name.into(),
            max_violation,
            tolerance,
            pass: max_violation <= tolerance,
            locations: order,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.max_violation <= tolerance;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagnosticReport {
    pub system: String,
    pub metadata: BTreeMap<String, String>,
    pub checks: Vec<CheckResult>,
}

impl DiagnosticReport {
    pub fn new(system: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// `max_j |<N, xi_j>| / (1 + ||N||)` over a kernel basis of `phi_v`.
pub fn virtual_work_violation(system: &SystemModel, z: &PhasePoint) -> Result<f64> {
    let eval = evaluate(system, z)?;
    let space = system.space();
    let n = &eval.reaction.reaction;
    let scale = 1.0 + space.norm(n);
    Ok(kernel_basis(eval.jet.d_v(), RANK_TOL)
        .iter()
        .map(|xi| space.inner_unchecked(n, xi).abs())
        .fold(0.0, f64::max)
        / scale)
}

pub fn check_virtual_work(
    system: &SystemModel,
    points: &[PhasePoint],
    tolerance: f64,
) -> Result<CheckResult> {
    let v = points
        .iter()
        .map(|z| virtual_work_violation(system, z))
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckResult::from_violations(VIRTUAL_WORK, &v, tolerance))
}

/// Drift `max_i |F(z_i) - F(z_0)|` along the trajectory.
pub fn check_first_integral<F>(
    traj: &Trajectory,
    name: &str,
    evaluator: F,
    tolerance: f64,
) -> Result<CheckResult>
where
    F: Fn(&PhasePoint) -> f64,
{
    let first = traj
        .first()
        .ok_or_else(|| DynamicsError::invalid("first-integral check needs a nonempty trajectory"))?;
    let f0 = evaluator(first);
    let drift: Vec<f64> = traj.points().map(|z| (evaluator(z) - f0).abs()).collect();
    Ok(CheckResult::from_violations(name, &drift, tolerance))
}

/// Drift of the kinetic energy `||v||^2 / 2`.
pub fn check_energy(traj: &Trajectory, space: &SpaceSpec, tolerance: f64) -> Result<CheckResult> {
    check_first_integral(
        traj,
        ENERGY,
        |z| 0.5 * space.inner_unchecked(&z.v, &z.v),
        tolerance,
    )
}

/// Compares reactions of `phi`, `pi * phi` and `phi + phi^3` on points of
/// the constraint set.
pub fn check_reparameterization(
    system: &SystemModel,
    points_on_s: &[PhasePoint],
    tolerance: f64,
) -> Result<CheckResult> {
    let families = [
        reparameterize_constraint(system, Reparameterization::Scale(std::f64::consts::PI))?,
        reparameterize_constraint(system, Reparameterization::Cubic)?,
    ];
    let space = system.space();
    let mut violations = Vec::with_capacity(points_on_s.len());
    for (i, z) in points_on_s.iter().enumerate() {
        let phi = system.constraint(z)?.value().norm();
        if phi > tol::ON_CONSTRAINT {
            return Err(DynamicsError::invalid(format!(
                "point {i} is off the constraint set (|phi| = {phi:e})"
            )));
        }
        let base = reaction_force(system, z)?.reaction;
        let scale = space.norm(&base);
        let mut worst: f64 = 0.0;
        for rep in &families {
            let diff = space.norm(&(reaction_force(rep, z)?.reaction - &base));
            worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
        }
        violations.push(worst);
    }
    Ok(CheckResult::from_violations(
        REPARAMETERIZATION,
        &violations,
        tolerance,
    ))
}

/// Converse Lagrange-D'Alembert check on a uniformly sampled trajectory.
///
/// With second-difference accelerations `a_i`, reports three entries:
/// `||phi(z_i)||` against `tolerance`, and the D'Alembert residual of
/// `a_i` and `||a_i - x''(z_i)||` against the finite-difference bound
/// `B = 10 tolerance + 2 (h^2 / 12) max ||x''''|| + 8 eps max ||x|| / h^2`,
/// where the fourth derivative is estimated from fourth differences of the
/// data itself.
pub fn check_converse_dalembert(
    system: &SystemModel,
    traj: &Trajectory,
    tolerance: f64,
) -> Result<Vec<CheckResult>> {
    let n = traj.len();
    if n < 5 {
        return Err(DynamicsError::invalid(format!(
            "converse check needs at least 5 samples, got {n}"
        )));
    }
    let h = traj
        .uniform_step(1e-9)
        .ok_or_else(|| DynamicsError::invalid("converse check needs uniformly spaced samples"))?;
    let xs: Vec<&DVector<f64>> = traj.points().map(|z| &z.x).collect();

    let mut d4_max: f64 = 0.0;
    for i in 2..n - 2 {
        let d4 = xs[i + 2] - xs[i + 1] * 4.0 + xs[i] * 6.0 - xs[i - 1] * 4.0 + xs[i - 2];
        d4_max = d4_max.max(d4.norm() / h.powi(4));
    }
    let x_max = xs.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let bound = 10.0 * tolerance + 2.0 * h * h / 12.0 * d4_max + 8.0 * f64::EPSILON * x_max / (h * h);

    let space = system.space();
    let mut phi_v = Vec::with_capacity(n - 2);
    let mut res_v = Vec::with_capacity(n - 2);
    let mut acc_v = Vec::with_capacity(n - 2);
    let mut inv_scale: f64 = 1.0;
    for i in 1..n - 1 {
        let z = &traj.samples[i].point;
        let a = (xs[i + 1] - xs[i] * 2.0 + xs[i - 1]) / (h * h);
        phi_v.push(system.constraint(z)?.value().norm());
        res_v.push(dalembert_residual(system, z, &a)?);
        let exact = constrained_acceleration(system, z)?;
        acc_v.push(space.norm(&(a - exact)));
        if i == 1 {
            let inertia = system.inertia(z)?;
            let dim = space.dim_x();
            let cols = (0..dim)
                .map(|k| inertia.apply_inverse(&DVector::from_fn(dim, |j, _| f64::from(j == k))))
                .collect::<Result<Vec<_>>>()?;
            inv_scale = DMatrix::from_columns(&cols).norm().max(1.0);
        }
    }
    // Indices refer to trajectory samples.
    let shift = |mut c: CheckResult| {
        c.locations.iter_mut().for_each(|l| *l += 1);
        c
    };
    Ok(vec![
        shift(CheckResult::from_violations(
            format!("{CONVERSE_DALEMBERT}/constraint"),
            &phi_v,
            tolerance,
        )),
        shift(CheckResult::from_violations(
            format!("{CONVERSE_DALEMBERT}/residual"),
            &res_v,
            bound * inv_scale,
        )),
        shift(CheckResult::from_violations(
            format!("{CONVERSE_DALEMBERT}/acceleration"),
            &acc_v,
            bound,
        )),
    ])
}

/// For self-adjoint coercive `P`: `b` symmetric and
/// `lambda_min(b) >= K sigma_min(phi_v W^{-1/2})^2`, where `K` is the
/// coercivity constant of `P`. The violation per point is the larger of the
/// relative asymmetry and the relative shortfall of `lambda_min`.
pub fn check_b_structure(system: &SystemModel, points: &[PhasePoint], tolerance: f64) -> Result<CheckResult> {
    let space = system.space();
    let inv_sqrt_w = space.weights().map(|w| 1.0 / w.sqrt());
    let mut violations = Vec::with_capacity(points.len());
    for z in points {
        let eval = evaluate(system, z)?;
        let b = eval.reaction.b_matrix.matrix();
        let bnorm = b.norm();
        let asym = (b - b.transpose()).norm() / bnorm;
        let lambda_min = SymmetricEigen::new((b + b.transpose()) * 0.5).eigenvalues.min();
        let k = eval.inertia.coercivity(space, 256, 0)?;
        let mut scaled = eval.jet.d_v().clone();
        for (mut col, s) in scaled.column_iter_mut().zip(inv_sqrt_w.iter()) {
            col *= *s;
        }
        let sigma = scaled.singular_values().min();
        let floor = k * sigma * sigma;
        let shortfall = if lambda_min > 0.0 {
            (floor - lambda_min).max(0.0) / lambda_min.max(floor)
        } else {
            f64::INFINITY
        };
        violations.push(asym.max(shortfall));
    }
    Ok(CheckResult::from_violations(B_STRUCTURE, &violations, tolerance))
}

// ---------------------------------------------------------------------------
// Sampling

/// Seeded random phase points with components uniform in `[-1, 1]`, kept
/// only if inside the system domain and valid for the reaction formula.
pub fn random_points(system: &SystemModel, count: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = system.space().dim_x();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < 1000 * count.max(1) {
        attempts += 1;
        let z = draw(&mut rng, n);
        if evaluate(system, &z).is_ok() {
            out.push(z);
        }
    }
    out
}

/// Like [`random_points`], then moved onto `{phi = 0}`: first by
/// [`project_onto_constraint`], and when the velocity alone cannot reach
/// the set, by Gauss-Newton on `(x, v)` jointly.
pub fn random_points_on_constraint(
    system: &SystemModel,
    count: usize,
    seed: u64,
    config: &IntegratorConfig,
) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = system.space().dim_x();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < 1000 * count.max(1) {
        attempts += 1;
        let z = draw(&mut rng, n);
        let projected =
            project_onto_constraint(system, &z, config).or_else(|_| project_jointly(system, &z, config));
        if let Ok(p) = projected {
            let on = system
                .constraint(&p)
                .map(|j| j.value().norm() <= tol::ON_CONSTRAINT)
                .unwrap_or(false);
            if on && evaluate(system, &p).is_ok() {
                out.push(p);
            }
        }
    }
    out
}

fn draw(rng: &mut ChaCha8Rng, n: usize) -> PhasePoint {
    let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    PhasePoint { t: 0.0, x, v }
}

/// Minimal weighted-norm Gauss-Newton corrections in `(x, v)`.
fn project_jointly(system: &SystemModel, z: &PhasePoint, config: &IntegratorConfig) -> Result<PhasePoint> {
    let space = system.space();
    let mut cur = z.clone();
    for _ in 0..=config.max_projection_iters {
        let jet = system.constraint(&cur)?;
        let r = jet.value().norm();
        if r <= config.projection_tol {
            return Ok(cur);
        }
        let ax = space.adjoint(jet.d_x());
        let av = space.adjoint(jet.d_v());
        let b = jet.d_x() * &ax + jet.d_v() * &av;
        let delta = b
            .full_piv_lu()
            .solve(jet.value())
            .ok_or_else(|| DynamicsError::invalid("singular joint projection"))?;
        cur.x -= ax * &delta;
        cur.v -= av * &delta;
    }
    Err(DynamicsError::ProjectionFailure {
        iterations: config.max_projection_iters,
        residual: system.constraint(&cur)?.value().norm(),
        last: Box::new(cur),
    })
}

// ---------------------------------------------------------------------------
// Dimension sweep

/// Built-in families with dimension-independent exact solutions when the
/// initial data is padded with zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepSystem {
    /// Unit sphere, `x0 = e1`, `v0 = e2` (needs `dim >= 2`).
    Sphere,
    /// Energy oscillator with unit weights, `C1 = C2 = e1`.
    Oscillator,
}

impl SweepSystem {
    pub fn build(&self, dim: usize) -> Result<(SystemModel, PhasePoint)> {
        let space = SpaceSpec::euclidean(dim, 1)?;
        let e = |k: usize| DVector::from_fn(dim, |i, _| f64::from(i == k));
        match self {
            SweepSystem::Sphere => {
                if dim < 2 {
                    return Err(DynamicsError::invalid("sphere sweep needs dim >= 2"));
                }
                let sys = build_quadric_geodesic(&QuadricSpec::sphere(dim), &space)?;
                Ok((sys, PhasePoint::new(0.0, e(0), e(1))?))
            }
            SweepSystem::Oscillator => {
                let sys = build_energy_oscillator(&space)?;
                Ok((sys, PhasePoint::new(0.0, e(0), e(0))?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub dim: usize,
    /// Probe evaluated at the final state.
    pub probe: f64,
    /// `|probe - previous probe|`; absent for the first row.
    pub probe_diff: Option<f64>,
    /// Largest componentwise difference to the previous dimension's
    /// trajectory, over all samples (missing components count as zero).
    pub state_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub system: SweepSystem,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn max_diff(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| [r.probe_diff, r.state_diff])
            .flatten()
            .fold(0.0, f64::max)
    }

    pub fn as_check(&self, tolerance: f64) -> CheckResult {
        let diffs: Vec<f64> = self
            .rows
            .iter()
            .map(|r| r.probe_diff.unwrap_or(0.0).max(r.state_diff.unwrap_or(0.0)))
            .collect();
        CheckResult::from_violations(DIMENSION_SWEEP, &diffs, tolerance)
    }
}

fn padded_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| (a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

pub fn dimension_sweep<P>(
    template: SweepSystem,
    dims: &[usize],
    config: &IntegratorConfig,
    span: f64,
    probe: P,
) -> Result<SweepTable>
where
    P: Fn(&PhasePoint) -> f64,
{
    if dims.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DynamicsError::invalid(
            "sweep dimensions must be strictly ascending",
        ));
    }
    let mut rows: Vec<SweepRow> = Vec::with_capacity(dims.len());
    let mut prev: Option<Trajectory> = None;
    for &dim in dims {
        let (sys, z0) = template.build(dim)?;
        let traj = integrate(&sys, &z0, z0.t + span, config, &[]).map_err(|f| f.cause)?;
        let last = traj.last().expect("integration records the initial sample");
        let value = probe(last);
        let (probe_diff, state_diff) = match (&prev, rows.last()) {
            (Some(p), Some(r)) => {
                let sd = if p.len() == traj.len() {
                    p.points()
                        .zip(traj.points())
                        .map(|(a, b)| padded_diff(&a.x, &b.x).max(padded_diff(&a.v, &b.v)))
                        .fold(0.0, f64::max)
                } else {
                    f64::INFINITY
                };
                (Some((value - r.probe).abs()), Some(sd))
            }
            _ => (None, None),
        };
        rows.push(SweepRow {
            dim,
            probe: value,
            probe_diff,
            state_diff,
        });
        prev = Some(traj);
    }
    Ok(SweepTable {
        system: template,
        rows,
    })
}
