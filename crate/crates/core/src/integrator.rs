//! Time integration of `x' = v`, `v' = P (f + N)` with explicit Runge-Kutta
//! methods, optional post-step projection onto the constraint set, and
//! trajectory recording.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{DynamicsError, Result};
use crate::reaction::{evaluate, SystemModel};
use crate::space::PhasePoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with a fixed step.
    Rk4,
    /// Dormand-Prince 5(4) embedded pair with step-size control.
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Off,
    PostStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for rk4, initial step for rk45.
    pub step: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub projection: Projection,
    pub projection_tol: f64,
    pub max_projection_iters: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            step: 1e-3,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            projection: Projection::Off,
            projection_tol: 1e-12,
            max_projection_iters: 20,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(DynamicsError::invalid(format!(
                    "{name} must be positive, got {x}"
                )))
            }
        };
        positive("step", self.step)?;
        positive("abs_tol", self.abs_tol)?;
        positive("rel_tol", self.rel_tol)?;
        positive("projection_tol", self.projection_tol)?;
        if self.max_projection_iters == 0 {
            return Err(DynamicsError::invalid("max_projection_iters must be positive"));
        }
        Ok(())
    }
}

/// A named scalar function of the phase point, recorded at every sample.
#[derive(Clone)]
pub struct Observer {
    name: String,
    eval: Arc<dyn Fn(&PhasePoint) -> f64 + Send + Sync>,
}

impl Observer {
    pub fn new(name: impl Into<String>, eval: impl Fn(&PhasePoint) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, z: &PhasePoint) -> f64 {
        (self.eval)(z)
    }
}

impl fmt::Debug for Observer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observer").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub point: PhasePoint,
    pub constraint: DVector<f64>,
    pub invariants: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IntegrationStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    pub projections: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub system_name: String,
    /// `None` for trajectories sampled from a closed form.
    pub config: Option<IntegratorConfig>,
    pub invariant_names: Vec<String>,
    pub samples: Vec<Sample>,
    pub warnings: Vec<String>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    fn empty(system: &SystemModel, config: Option<IntegratorConfig>, observers: &[Observer]) -> Self {
        Self {
            system_name: system.name().to_string(),
            config,
            invariant_names: observers.iter().map(|o| o.name().to_string()).collect(),
            samples: Vec::new(),
            warnings: Vec::new(),
            stats: IntegrationStats::default(),
        }
    }

    /// Builds a trajectory from externally supplied states, e.g. a closed
    /// form evaluated on a grid. Times must be strictly increasing.
    pub fn from_points(
        system: &SystemModel,
        points: Vec<PhasePoint>,
        observers: &[Observer],
    ) -> Result<Self> {
        let mut traj = Self::empty(system, None, observers);
        for z in points {
            if let Some(last) = traj.samples.last() {
                if !(z.t > last.point.t) {
                    return Err(DynamicsError::invalid("sample times must be strictly increasing"));
                }
            }
            traj.push(system, z, observers)?;
        }
        Ok(traj)
    }

    fn push(&mut self, system: &SystemModel, z: PhasePoint, observers: &[Observer]) -> Result<()> {
        let constraint = system.constraint(&z)?.value().clone();
        let invariants = observers.iter().map(|o| o.eval(&z)).collect();
        self.samples.push(Sample {
            point: z,
            constraint,
            invariants,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> Option<&PhasePoint> {
        self.samples.first().map(|s| &s.point)
    }

    pub fn last(&self) -> Option<&PhasePoint> {
        self.samples.last().map(|s| &s.point)
    }

    pub fn points(&self) -> impl Iterator<Item = &PhasePoint> {
        self.samples.iter().map(|s| &s.point)
    }

    /// `max_i ||phi(z_i)||`.
    pub fn max_constraint_norm(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.constraint.norm())
            .fold(0.0, f64::max)
    }

    /// Values of the named observer, in sample order.
    pub fn invariant(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.invariant_names.iter().position(|n| n == name)?;
        Some(self.samples.iter().map(|s| s.invariants[k]).collect())
    }

    /// The common spacing if sample times are uniform to `rel_tol`.
    pub fn uniform_step(&self, rel_tol: f64) -> Option<f64> {
        let n = self.samples.len();
        if n < 2 {
            return None;
        }
        let t0 = self.samples[0].point.t;
        let h = (self.samples[n - 1].point.t - t0) / (n - 1) as f64;
        let uniform = self
            .samples
            .iter()
            .enumerate()
            .all(|(i, s)| (s.point.t - (t0 + i as f64 * h)).abs() <= rel_tol * h);
        uniform.then_some(h)
    }
}

/// A failed run: the samples accepted before the failure and its cause.
#[derive(Debug, Clone)]
pub struct IntegrationFailure {
    pub partial: Trajectory,
    pub cause: DynamicsError,
}

impl fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} samples", self.cause, self.partial.samples.len())
    }
}

impl std::error::Error for IntegrationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.cause)
    }
}

struct Rhs<'a> {
    system: &'a SystemModel,
    evaluations: usize,
}

impl Rhs<'_> {
    /// `(x', v') = (v, a)` at `z`, labeling domain exits with the stage.
    fn eval(&mut self, z: &PhasePoint, stage: usize) -> Result<Slope> {
        self.evaluations += 1;
        let acc = evaluate(self.system, z)
            .map_err(|e| match e {
                DynamicsError::DomainExit { t, detail } => DynamicsError::DomainExit {
                    t,
                    detail: format!("stage {stage}: {detail}"),
                },
                other => other,
            })?
            .acceleration;
        Ok((z.v.clone(), acc))
    }
}

/// `(x', v')` at a stage.
type Slope = (DVector<f64>, DVector<f64>);

fn offset(z: &PhasePoint, dt: f64, terms: &[(f64, &Slope)]) -> PhasePoint {
    let mut x = z.x.clone();
    let mut v = z.v.clone();
    for (c, (dx, dv)) in terms {
        if *c != 0.0 {
            x.axpy(dt * c, dx, 1.0);
            v.axpy(dt * c, dv, 1.0);
        }
    }
    PhasePoint { t: z.t, x, v }
}

fn rk4_step(rhs: &mut Rhs<'_>, z: &PhasePoint, h: f64) -> Result<PhasePoint> {
    let k1 = rhs.eval(z, 1)?;
    let mut s2 = offset(z, h, &[(0.5, &k1)]);
    s2.t = z.t + 0.5 * h;
    let k2 = rhs.eval(&s2, 2)?;
    let mut s3 = offset(z, h, &[(0.5, &k2)]);
    s3.t = z.t + 0.5 * h;
    let k3 = rhs.eval(&s3, 3)?;
    let mut s4 = offset(z, h, &[(1.0, &k3)]);
    s4.t = z.t + h;
    let k4 = rhs.eval(&s4, 4)?;
    let mut out = offset(
        z,
        h,
        &[
            (1.0 / 6.0, &k1),
            (1.0 / 3.0, &k2),
            (1.0 / 3.0, &k3),
            (1.0 / 6.0, &k4),
        ],
    );
    out.t = z.t + h;
    Ok(out)
}

// Dormand-Prince 5(4).
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince attempt; returns the fifth-order state and the
/// scaled error norm (accept when `<= 1`).
fn rk45_attempt(
    rhs: &mut Rhs<'_>,
    z: &PhasePoint,
    h: f64,
    config: &IntegratorConfig,
) -> Result<(PhasePoint, f64)> {
    let mut ks: Vec<Slope> = Vec::with_capacity(7);
    for stage in 0..7 {
        let terms: Vec<(f64, &Slope)> = ks.iter().enumerate().map(|(j, k)| (DP_A[stage][j], k)).collect();
        let mut s = offset(z, h, &terms);
        s.t = z.t + DP_C[stage] * h;
        ks.push(rhs.eval(&s, stage + 1)?);
    }
    let high_terms: Vec<_> = ks.iter().enumerate().map(|(j, k)| (DP_B5[j], k)).collect();
    let low_terms: Vec<_> = ks.iter().enumerate().map(|(j, k)| (DP_B4[j], k)).collect();
    let mut high = offset(z, h, &high_terms);
    high.t = z.t + h;
    let low = offset(z, h, &low_terms);

    let scaled = |y0: &DVector<f64>, y1: &DVector<f64>, e: f64, i: usize| {
        e.abs() / (config.abs_tol + config.rel_tol * y0[i].abs().max(y1[i].abs()))
    };
    let mut err: f64 = 0.0;
    for i in 0..z.dim() {
        err = err.max(scaled(&z.x, &high.x, high.x[i] - low.x[i], i));
        err = err.max(scaled(&z.v, &high.v, high.v[i] - low.v[i], i));
    }
    Ok((high, err))
}

fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

/// One explicit step from `z`. For rk4 this is a single step of size
/// `config.step`; for rk45 attempts are repeated with shrinking steps
/// (starting from `config.step`) until one is accepted.
pub fn step(system: &SystemModel, z: &PhasePoint, config: &IntegratorConfig) -> Result<PhasePoint> {
    config.validate()?;
    let mut rhs = Rhs {
        system,
        evaluations: 0,
    };
    match config.method {
        Method::Rk4 => rk4_step(&mut rhs, z, config.step),
        Method::Rk45 => {
            let mut h = config.step;
            loop {
                let (next, err) = rk45_attempt(&mut rhs, z, h, config)?;
                if err <= 1.0 {
                    return Ok(next);
                }
                h *= step_factor(err);
                if h < 1e-14 * config.step {
                    return Err(DynamicsError::StepUnderflow { t: z.t, step: h });
                }
            }
        }
    }
}

/// Moves the velocity onto `{phi = 0}` by Gauss-Newton iterations
/// `v <- v - phi_v' (phi_v phi_v')^{-1} phi`, the minimal weighted-norm
/// correction at each iterate. Positions are left untouched. Affine-in-`v`
/// constraints converge in one step.
pub fn project_onto_constraint(
    system: &SystemModel,
    z: &PhasePoint,
    config: &IntegratorConfig,
) -> Result<PhasePoint> {
    let mut cur = z.clone();
    let mut residual = f64::INFINITY;
    for iter in 0..=config.max_projection_iters {
        let jet = system.constraint(&cur)?;
        residual = jet.value().norm();
        if residual <= config.projection_tol {
            return Ok(cur);
        }
        if iter == config.max_projection_iters {
            break;
        }
        let adj = system.space().adjoint(jet.d_v());
        let b = jet.d_v() * &adj;
        let Some(delta) = b.full_piv_lu().solve(jet.value()) else {
            break;
        };
        cur.v -= adj * delta;
        if !cur.is_finite() {
            break;
        }
    }
    Err(DynamicsError::ProjectionFailure {
        iterations: config.max_projection_iters,
        residual,
        last: Box::new(cur),
    })
}

/// Integrates from `z0` to `t_end`, sampling at every accepted step.
///
/// Fixed-step rk4 uses `n = floor((t_end - t0) / step)` equal steps of
/// size `(t_end - t0) / n`, so the grid is uniform and ends exactly at
/// `t_end` with `n + 1` samples.
#[allow(clippy::result_large_err)]
pub fn integrate(
    system: &SystemModel,
    z0: &PhasePoint,
    t_end: f64,
    config: &IntegratorConfig,
    observers: &[Observer],
) -> std::result::Result<Trajectory, IntegrationFailure> {
    let mut traj = Trajectory::empty(system, Some(config.clone()), observers);
    macro_rules! bail {
        ($e:expr) => {
            return Err(IntegrationFailure {
                partial: traj,
                cause: $e,
            })
        };
    }
    macro_rules! tryf {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) => bail!(e),
            }
        };
    }

    tryf!(config.validate());
    if !(t_end > z0.t) || !t_end.is_finite() {
        bail!(DynamicsError::invalid(format!(
            "t_end = {t_end} must exceed the initial time {}",
            z0.t
        )));
    }

    let mut z = z0.clone();
    let phi0 = tryf!(system.constraint(&z)).value().norm();
    if phi0 > config.projection_tol {
        match config.projection {
            Projection::Off => traj.warnings.push(format!(
                "initial point is off the constraint set (|phi| = {phi0:e}); invariance is only guaranteed from points on it"
            )),
            Projection::PostStep => {
                z = tryf!(project_onto_constraint(system, &z, config));
                traj.stats.projections += 1;
                traj.warnings.push(format!(
                    "initial point projected onto the constraint set (|phi| was {phi0:e})"
                ));
            }
        }
    }
    tryf!(traj.push(system, z.clone(), observers));

    let span = t_end - z0.t;
    let mut rhs = Rhs {
        system,
        evaluations: 0,
    };
    let accept = |traj: &mut Trajectory, prev: &PhasePoint, mut next: PhasePoint| -> Result<PhasePoint> {
        system
            .domain()
            .check_chord(prev, &next)
            .map_err(|detail| DynamicsError::DomainExit { t: next.t, detail })?;
        if config.projection == Projection::PostStep {
            next = project_onto_constraint(system, &next, config)?;
            traj.stats.projections += 1;
        }
        traj.stats.accepted_steps += 1;
        traj.push(system, next.clone(), observers)?;
        Ok(next)
    };

    match config.method {
        Method::Rk4 => {
            let n = ((span / config.step) * (1.0 + 1e-12)).floor().max(1.0) as usize;
            let h = span / n as f64;
            for k in 1..=n {
                let res = rk4_step(&mut rhs, &z, h);
                traj.stats.rhs_evaluations = rhs.evaluations;
                let mut next = tryf!(res);
                next.t = if k == n { t_end } else { z0.t + k as f64 * h };
                z = tryf!(accept(&mut traj, &z, next));
            }
        }
        Method::Rk45 => {
            let mut h = config.step.min(span);
            while z.t < t_end {
                let remaining = t_end - z.t;
                let last = h >= remaining;
                let h_try = if last { remaining } else { h };
                let res = rk45_attempt(&mut rhs, &z, h_try, config);
                traj.stats.rhs_evaluations = rhs.evaluations;
                let (mut next, err) = tryf!(res);
                let factor = step_factor(err);
                if err <= 1.0 {
                    if last {
                        next.t = t_end;
                    }
                    z = tryf!(accept(&mut traj, &z, next));
                    h = h_try * factor;
                } else {
                    traj.stats.rejected_steps += 1;
                    h = h_try * factor;
                    if h < 1e-14 * span {
                        bail!(DynamicsError::StepUnderflow { t: z.t, step: h });
                    }
                }
            }
        }
    }
    traj.stats.rhs_evaluations = rhs.evaluations;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_energy_oscillator, build_quadric_geodesic, QuadricSpec};
    use crate::reaction::{ConstraintJet, Inertia, Unbounded};
    use crate::space::SpaceSpec;
    use nalgebra::DMatrix;

    fn sphere3() -> SystemModel {
        build_quadric_geodesic(&QuadricSpec::sphere(3), &SpaceSpec::euclidean(3, 1).unwrap()).unwrap()
    }

    fn oscillator1() -> SystemModel {
        build_energy_oscillator(&SpaceSpec::euclidean(1, 1).unwrap()).unwrap()
    }

    fn pt(t: f64, x: &[f64], v: &[f64]) -> PhasePoint {
        PhasePoint::from_slices(t, x, v).unwrap()
    }

    /// phi = v_1 in R^2, P = I, f = 0.
    fn frozen_first_velocity() -> SystemModel {
        SystemModel::new(
            "v1",
            SpaceSpec::euclidean(2, 1).unwrap(),
            |_| Ok(Inertia::identity(2)),
            |_| Ok(DVector::zeros(2)),
            |z: &PhasePoint| {
                ConstraintJet::new(
                    DVector::from_element(1, z.v[0]),
                    DVector::zeros(1),
                    DMatrix::zeros(1, 2),
                    DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                )
            },
            Unbounded,
        )
    }

    #[test]
    fn straight_line_step() {
        let z = pt(0.0, &[1.0, 2.0], &[0.0, 3.0]);
        let out = step(&frozen_first_velocity(), &z, &IntegratorConfig::rk4(0.1)).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-15);
        assert!((out.x[1] - 2.3).abs() < 1e-15);
        assert_eq!(out.v.as_slice(), &[0.0, 3.0]);
        assert!((out.t - 0.1).abs() < 1e-16);
    }

    #[test]
    fn great_circle_single_step() {
        let h = 1e-3;
        let z = pt(0.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        let out = step(&sphere3(), &z, &IntegratorConfig::rk4(h)).unwrap();
        let ex = [h.cos(), h.sin(), 0.0];
        let ev = [-h.sin(), h.cos(), 0.0];
        for i in 0..3 {
            assert!((out.x[i] - ex[i]).abs() <= 1e-13);
            assert!((out.v[i] - ev[i]).abs() <= 1e-13);
        }
    }

    #[test]
    fn oscillator_single_step() {
        let h: f64 = 1e-3;
        let out = step(
            &oscillator1(),
            &pt(0.0, &[1.0], &[1.0]),
            &IntegratorConfig::rk4(h),
        )
        .unwrap();
        assert!((out.x[0] - (h.sin() + h.cos())).abs() <= 1e-14);
    }

    #[test]
    fn rk45_step_is_accurate() {
        let config = IntegratorConfig {
            method: Method::Rk45,
            step: 0.05,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            ..IntegratorConfig::default()
        };
        let z = pt(0.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        let out = step(&sphere3(), &z, &config).unwrap();
        let t = out.t;
        assert!(t > 0.0 && t <= 0.05);
        assert!((out.x[0] - t.cos()).abs() < 1e-11);
        assert!((out.x[1] - t.sin()).abs() < 1e-11);
    }

    #[test]
    fn rk45_integration_hits_end_time() {
        let config = IntegratorConfig {
            method: Method::Rk45,
            step: 0.1,
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            ..IntegratorConfig::default()
        };
        let z = pt(0.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        let traj = integrate(&sphere3(), &z, 3.0, &config, &[]).unwrap();
        let last = traj.last().unwrap();
        assert_eq!(last.t, 3.0);
        assert!((last.x[0] - 3f64.cos()).abs() < 1e-8);
        assert!(traj.samples.windows(2).all(|w| w[1].point.t > w[0].point.t));
    }

    #[test]
    fn rk4_grid_is_uniform_with_expected_count() {
        let z = pt(0.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        let traj = integrate(&sphere3(), &z, 1.0, &IntegratorConfig::rk4(1e-2), &[]).unwrap();
        assert_eq!(traj.len(), 101);
        assert_eq!(traj.last().unwrap().t, 1.0);
        let h = traj.uniform_step(1e-9).unwrap();
        assert!((h - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let config = IntegratorConfig::default();
        let sys = sphere3();
        let out =
            project_onto_constraint(&sys, &pt(0.0, &[1.0, 0.0, 0.0], &[0.1, 1.0, 0.0]), &config).unwrap();
        assert!((out.v - DVector::from_column_slice(&[0.0, 1.0, 0.0])).norm() < 1e-16);

        let on = pt(0.0, &[1.0, 0.0, 0.0], &[0.0, 0.3, 0.7]);
        assert_eq!(project_onto_constraint(&sys, &on, &config).unwrap(), on);

        let osc = oscillator1();
        let out = project_onto_constraint(&osc, &pt(0.0, &[1.0], &[1.01]), &config).unwrap();
        assert!((out.v[0] - 1.0).abs() < 1e-12);
        assert_eq!(out.x[0], 1.0);
    }

    #[test]
    fn projection_failure_reports_last_iterate() {
        let config = IntegratorConfig {
            max_projection_iters: 1,
            projection_tol: 1e-15,
            ..IntegratorConfig::default()
        };
        let err = project_onto_constraint(&oscillator1(), &pt(0.0, &[1.0], &[1.3]), &config).unwrap_err();
        match err {
            DynamicsError::ProjectionFailure { last, residual, .. } => {
                assert!(residual > 1e-15);
                assert!(last.v[0] < 1.3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn off_constraint_start_is_flagged() {
        let z = pt(0.0, &[1.0, 0.0, 0.0], &[0.5, 1.0, 0.0]);
        let traj = integrate(&sphere3(), &z, 0.01, &IntegratorConfig::rk4(1e-3), &[]).unwrap();
        assert_eq!(traj.warnings.len(), 1);
        let projected = integrate(
            &sphere3(),
            &z,
            0.01,
            &IntegratorConfig::rk4(1e-3).with_projection(Projection::PostStep),
            &[],
        )
        .unwrap();
        assert!(projected.max_constraint_norm() <= 1e-12);
    }

    #[test]
    fn oscillator_breaks_down_where_velocity_vanishes() {
        let fail = integrate(
            &oscillator1(),
            &pt(0.0, &[1.0], &[1.0]),
            std::f64::consts::FRAC_PI_2,
            &IntegratorConfig::rk4(1e-3),
            &[],
        )
        .unwrap_err();
        let DynamicsError::DomainExit { t, .. } = fail.cause else {
            panic!("{:?}", fail.cause);
        };
        assert!((t - std::f64::consts::FRAC_PI_4).abs() <= 1e-3, "{t}");
        let last = fail.partial.last().unwrap().t;
        assert!(last < t && t - last <= 1.01e-3, "{last}");
    }

    #[test]
    fn observers_are_recorded() {
        let obs = [Observer::new("speed2", |z: &PhasePoint| z.v.norm_squared())];
        let z = pt(0.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        let traj = integrate(&sphere3(), &z, 0.1, &IntegratorConfig::rk4(1e-2), &obs).unwrap();
        let s = traj.invariant("speed2").unwrap();
        assert_eq!(s.len(), traj.len());
        assert!(s.iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(traj.invariant("missing").is_none());
    }

    #[test]
    fn config_validation() {
        let z = pt(0.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        let bad = IntegratorConfig::rk4(0.0);
        assert!(step(&sphere3(), &z, &bad).is_err());
        assert!(integrate(&sphere3(), &z, 1.0, &bad, &[]).is_err());
        assert!(integrate(&sphere3(), &z, -1.0, &IntegratorConfig::default(), &[]).is_err());
    }
}
