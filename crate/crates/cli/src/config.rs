//! Scenario files: a TOML document naming a built-in system, its
//! parameters, initial data, time span, integrator settings, checks and
//! output locations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use constrained_dynamics::diagnostics::{self, tol, SweepSystem};
use constrained_dynamics::models::{
    affine_constraint, build_energy_oscillator, build_lagrange_system, build_quadric_geodesic,
    gaussian_l2_space, LagrangeData, OscillatorInit, QuadricSpec,
};
use constrained_dynamics::{
    IntegratorConfig, LinearMap, Method, Observer, PhasePoint, SpaceSpec, SystemModel,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A validation failure, tagged with the config key it concerns.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

fn err<T>(key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        key: key.to_string(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemConfig {
    #[serde(alias = "quadric-geodesic")]
    Quadric(QuadricConfig),
    #[serde(alias = "energy-oscillator")]
    Oscillator(OscillatorConfig),
    Lagrange(LagrangeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    /// `"identity"` or `"diag"` (meaning `diag(1, 2, ..., n)`).
    Named(String),
    Inline(Vec<Vec<f64>>),
}

impl Default for MatrixSpec {
    fn default() -> Self {
        MatrixSpec::Named("identity".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadricConfig {
    pub dim: usize,
    #[serde(default)]
    pub w: MatrixSpec,
    pub omega: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weights {
    #[default]
    Unit,
    /// Gauss rule for the standard normal density; `dim` is the node count.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorConfig {
    pub dim: usize,
    #[serde(default)]
    pub weights: Weights,
    /// `x(t0)`; a scalar means the constant function.
    pub c1: Option<ScalarOrVec>,
    /// `x'(t0)`.
    pub c2: Option<ScalarOrVec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangeConfig {
    /// Constant mass matrix.
    pub g: Vec<Vec<f64>>,
    /// `V = (x, K x) / 2`.
    pub stiffness: Option<Vec<Vec<f64>>>,
    /// `Q = force - D v`.
    pub damping: Option<Vec<Vec<f64>>>,
    pub force: Option<Vec<f64>>,
    pub constraint: AffineConfig,
}

/// `phi = A v + B x - c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    #[serde(default)]
    pub project: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
}

fn default_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    /// Defaults to the system's standard suite.
    pub suite: Option<Vec<String>>,
    #[serde(default)]
    pub tolerance: BTreeMap<String, f64>,
    /// Random points for the pointwise checks.
    #[serde(default = "default_points")]
    pub points: usize,
    pub sweep_dims: Option<Vec<usize>>,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            suite: None,
            tolerance: BTreeMap::new(),
            points: default_points(),
            sweep_dims: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub observers: Vec<String>,
}

pub const OBSERVERS: [&str; 4] = [
    "kinetic-energy",
    "total-energy",
    "quadric-level",
    "rotation-integral",
];

/// Checks accepted in `checks.suite`.
pub fn check_names() -> Vec<&'static str> {
    let mut names = diagnostics::CHECK_NAMES.to_vec();
    names.push(diagnostics::B_STRUCTURE);
    names
}

pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let key = match e.span() {
            Some(span) => format!("line {}", text[..span.start].lines().count().max(1)),
            None => "config".to_string(),
        };
        ConfigError { key, message }
    })
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse(&text)
}

/// Closed forms the run can be compared against.
#[derive(Debug, Clone)]
pub enum Oracle {
    Sphere { x0: DVector<f64>, v0: DVector<f64> },
    Oscillator(OscillatorInit),
}

impl Oracle {
    pub fn eval(&self, t: f64) -> Option<(DVector<f64>, DVector<f64>)> {
        match self {
            Oracle::Sphere { x0, v0 } => {
                constrained_dynamics::models::quadric_closed_form_sphere(x0, v0, t).ok()
            }
            Oracle::Oscillator(init) => constrained_dynamics::models::oscillator_closed_form(init, t).ok(),
        }
    }
}

/// A validated scenario ready to run.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub system: SystemModel,
    pub z0: PhasePoint,
    pub observers: Vec<Observer>,
    pub oracle: Option<Oracle>,
    pub quadric: Option<QuadricSpec>,
    pub suite: Vec<String>,
    pub sweep: Option<(SweepSystem, Vec<usize>)>,
    pub trajectory_path: PathBuf,
    pub summary_path: PathBuf,
    pub report_path: PathBuf,
}

fn matrix(key: &str, rows: &[Vec<f64>], n: usize, m: usize) -> Result<DMatrix<f64>, ConfigError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
        return err(key, format!("expected a {n}x{m} matrix"));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return err(key, "entries must be finite");
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn vector(key: &str, v: &[f64], n: usize) -> Result<DVector<f64>, ConfigError> {
    if v.len() != n {
        return err(key, format!("expected {n} components, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return err(key, "entries must be finite");
    }
    Ok(DVector::from_column_slice(v))
}

fn scalar_or_vec(key: &str, v: &ScalarOrVec, n: usize) -> Result<DVector<f64>, ConfigError> {
    match v {
        ScalarOrVec::Scalar(c) if c.is_finite() => Ok(DVector::repeat(n, *c)),
        ScalarOrVec::Scalar(_) => err(key, "must be finite"),
        ScalarOrVec::Vector(v) => vector(key, v, n),
    }
}

fn spec_err(key: &str) -> impl Fn(constrained_dynamics::DynamicsError) -> ConfigError + '_ {
    move |e| ConfigError {
        key: key.to_string(),
        message: e.to_string(),
    }
}

struct Built {
    system: SystemModel,
    x0: DVector<f64>,
    v0: DVector<f64>,
    quadric: Option<QuadricSpec>,
    oscillator_space: Option<SpaceSpec>,
    sphere: bool,
    sweep: Option<SweepSystem>,
    default_suite: Vec<&'static str>,
}

fn initial_pair(init: &InitialConfig, n: usize) -> Result<(DVector<f64>, DVector<f64>), ConfigError> {
    let x0 = match &init.x0 {
        Some(x) => vector("initial.x0", x, n)?,
        None => return err("initial.x0", "missing"),
    };
    let v0 = match &init.v0 {
        Some(v) => vector("initial.v0", v, n)?,
        None => return err("initial.v0", "missing"),
    };
    Ok((x0, v0))
}

fn build_system(cfg: &ScenarioConfig) -> Result<Built, ConfigError> {
    use diagnostics::{CONVERSE_DALEMBERT, ENERGY, FIRST_INTEGRAL, REPARAMETERIZATION, VIRTUAL_WORK};
    match &cfg.system {
        SystemConfig::Quadric(q) => {
            let n = q.dim;
            if n == 0 {
                return err("system.dim", "must be positive");
            }
            let w = match &q.w {
                MatrixSpec::Named(s) if s == "identity" => LinearMap::identity(n),
                MatrixSpec::Named(s) if s == "diag" => {
                    let d: Vec<f64> = (1..=n).map(|k| k as f64).collect();
                    LinearMap::diagonal(&d).map_err(spec_err("system.w"))?
                }
                MatrixSpec::Named(s) => {
                    return err(
                        "system.w",
                        format!("unknown matrix {s:?} (use \"identity\", \"diag\" or rows)"),
                    )
                }
                MatrixSpec::Inline(rows) => {
                    LinearMap::new(matrix("system.w", rows, n, n)?).map_err(spec_err("system.w"))?
                }
            };
            let omega = match &q.omega {
                Some(rows) => Some(
                    LinearMap::new(matrix("system.omega", rows, n, n)?).map_err(spec_err("system.omega"))?,
                ),
                None => None,
            };
            let spec = QuadricSpec::new(w, omega).map_err(spec_err("system"))?;
            let space = SpaceSpec::euclidean(n, 1).map_err(spec_err("system.dim"))?;
            let system = build_quadric_geodesic(&spec, &space).map_err(spec_err("system"))?;
            let (x0, v0) = initial_pair(&cfg.initial, n)?;
            let sphere = matches!(&q.w, MatrixSpec::Named(s) if s == "identity") && n >= 2;
            Ok(Built {
                system,
                x0,
                v0,
                quadric: Some(spec),
                oscillator_space: None,
                sphere,
                sweep: (sphere && q.omega.is_none()).then_some(SweepSystem::Sphere),
                default_suite: vec![
                    VIRTUAL_WORK,
                    FIRST_INTEGRAL,
                    ENERGY,
                    REPARAMETERIZATION,
                    CONVERSE_DALEMBERT,
                ],
            })
        }
        SystemConfig::Oscillator(o) => {
            let n = o.dim;
            if n == 0 {
                return err("system.dim", "must be positive");
            }
            let space = match o.weights {
                Weights::Unit => SpaceSpec::euclidean(n, 1).map_err(spec_err("system.dim"))?,
                Weights::Gaussian => gaussian_l2_space(n).map_err(spec_err("system.dim"))?,
            };
            let system = build_energy_oscillator(&space).map_err(spec_err("system"))?;
            let has_initial = cfg.initial.x0.is_some() || cfg.initial.v0.is_some();
            let (x0, v0) = match (&o.c1, &o.c2, has_initial) {
                (Some(c1), Some(c2), false) => (
                    scalar_or_vec("system.c1", c1, n)?,
                    scalar_or_vec("system.c2", c2, n)?,
                ),
                (None, None, true) => initial_pair(&cfg.initial, n)?,
                (None, None, false) => {
                    return err("system.c1", "give c1 and c2, or initial.x0 and initial.v0")
                }
                (_, _, true) => return err("initial", "give either system.c1/c2 or initial.x0/v0, not both"),
                (None, _, false) => return err("system.c1", "missing"),
                (_, None, false) => return err("system.c2", "missing"),
            };
            Ok(Built {
                system,
                x0,
                v0,
                quadric: None,
                oscillator_space: Some(space),
                sphere: false,
                sweep: (o.weights == Weights::Unit).then_some(SweepSystem::Oscillator),
                default_suite: vec![
                    VIRTUAL_WORK,
                    FIRST_INTEGRAL,
                    REPARAMETERIZATION,
                    CONVERSE_DALEMBERT,
                ],
            })
        }
        SystemConfig::Lagrange(l) => {
            let n = l.g.len();
            if n == 0 {
                return err("system.g", "must be a nonempty square matrix");
            }
            let g = matrix("system.g", &l.g, n, n)?;
            let k = match &l.stiffness {
                Some(rows) => matrix("system.stiffness", rows, n, n)?,
                None => DMatrix::zeros(n, n),
            };
            let d = match &l.damping {
                Some(rows) => Some(matrix("system.damping", rows, n, n)?),
                None => None,
            };
            let q = match &l.force {
                Some(f) => Some(vector("system.force", f, n)?),
                None => None,
            };
            let m = l.constraint.a.len();
            if m == 0 || m > n {
                return err("system.constraint.a", format!("needs between 1 and {n} rows"));
            }
            let a = matrix("system.constraint.a", &l.constraint.a, m, n)?;
            let b = match &l.constraint.b {
                Some(rows) => Some(matrix("system.constraint.b", rows, m, n)?),
                None => None,
            };
            let c = match &l.constraint.c {
                Some(c) => Some(vector("system.constraint.c", c, m)?),
                None => None,
            };
            let mut data = LagrangeData::quadratic(g, k);
            if d.is_some() || q.is_some() {
                let q = q.unwrap_or_else(|| DVector::zeros(n));
                let d = d.unwrap_or_else(|| DMatrix::zeros(n, n));
                data = data.with_applied_force(move |z: &PhasePoint| &q - &d * &z.v);
            }
            let constraint = affine_constraint(a, b, c).map_err(spec_err("system.constraint"))?;
            let space = SpaceSpec::euclidean(n, m).map_err(spec_err("system.constraint.a"))?;
            let system = build_lagrange_system(data, constraint, &space).map_err(spec_err("system.g"))?;
            let (x0, v0) = initial_pair(&cfg.initial, n)?;
            Ok(Built {
                system,
                x0,
                v0,
                quadric: None,
                oscillator_space: None,
                sphere: false,
                sweep: None,
                default_suite: vec![
                    VIRTUAL_WORK,
                    FIRST_INTEGRAL,
                    REPARAMETERIZATION,
                    CONVERSE_DALEMBERT,
                ],
            })
        }
    }
}

fn observers(names: &[String], built: &Built) -> Result<Vec<Observer>, ConfigError> {
    let space = built.system.space().clone();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let sp = space.clone();
        let obs = match name.as_str() {
            "kinetic-energy" => Observer::new(name, move |z| 0.5 * sp.norm(&z.v).powi(2)),
            "total-energy" => match (&built.oscillator_space, &built.quadric) {
                (Some(_), _) => Observer::new(name, move |z| {
                    0.5 * (sp.norm(&z.v).powi(2) + sp.norm(&z.x).powi(2))
                }),
                (None, Some(_)) => Observer::new(name, move |z| 0.5 * sp.norm(&z.v).powi(2)),
                _ => {
                    return err(
                        "output.observers",
                        format!("{name} is not defined for this system"),
                    )
                }
            },
            "quadric-level" => match &built.quadric {
                Some(q) => {
                    let q = q.clone();
                    Observer::new(name, move |z| q.level(&sp, &z.x))
                }
                None => return err("output.observers", format!("{name} needs a quadric system")),
            },
            "rotation-integral" => match &built.quadric {
                Some(q) if q.omega().is_some() => {
                    let q = q.clone();
                    Observer::new(name, move |z| q.rotation_integral(&sp, z).unwrap_or(f64::NAN))
                }
                _ => {
                    return err(
                        "output.observers",
                        format!("{name} needs a quadric system with omega"),
                    )
                }
            },
            _ => {
                return err(
                    "output.observers",
                    format!("unknown observer {name:?} (known: {})", OBSERVERS.join(", ")),
                )
            }
        };
        out.push(obs);
    }
    Ok(out)
}

fn oracle(built: &Built, cfg: &ScenarioConfig) -> Option<Oracle> {
    if cfg.initial.project {
        return None;
    }
    match (&cfg.system, &built.oscillator_space) {
        (SystemConfig::Quadric(_), _) if built.sphere => Some(Oracle::Sphere {
            x0: built.x0.clone(),
            v0: built.v0.clone(),
        })
        .filter(|o| o.eval(0.0).is_some()),
        (SystemConfig::Oscillator(_), Some(space)) => {
            OscillatorInit::new(built.x0.clone(), built.v0.clone(), space.clone())
                .ok()
                .filter(|i| i.is_on_constraint())
                .map(Oracle::Oscillator)
        }
        _ => None,
    }
}

/// Tolerance for a check, honoring overrides.
pub fn tolerance_for(cfg: &ScenarioConfig, name: &str) -> f64 {
    if let Some(t) = cfg.checks.tolerance.get(name) {
        return *t;
    }
    match name {
        diagnostics::VIRTUAL_WORK => tol::VIRTUAL_WORK,
        diagnostics::FIRST_INTEGRAL => tol::CONSTRAINT_INTEGRAL,
        diagnostics::ENERGY => tol::ENERGY,
        diagnostics::REPARAMETERIZATION => tol::REPARAMETERIZATION,
        diagnostics::CONVERSE_DALEMBERT => tol::CONVERSE,
        diagnostics::DIMENSION_SWEEP => tol::DIMENSION_SWEEP,
        _ => tol::B_STRUCTURE,
    }
}

/// Validates the config completely, resolving output paths against
/// `output_dir` (or `output.dir`, or the current directory).
pub fn build(
    mut config: ScenarioConfig,
    stem: &str,
    output_dir: Option<&Path>,
    seed: Option<u64>,
) -> Result<Scenario, ConfigError> {
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(dir) = output_dir {
        config.output.dir = Some(dir.to_path_buf());
    }
    let t0 = config.time.t0;
    let t_end = config.time.t_end;
    if !t0.is_finite() {
        return err("time.t0", "must be finite");
    }
    if !(t_end.is_finite() && t_end > t0) {
        return err("time.t_end", format!("must be finite and exceed t0 = {t0}"));
    }
    config.integrator.validate().map_err(spec_err("integrator"))?;

    let built = build_system(&config)?;
    let z0 = PhasePoint::new(t0, built.x0.clone(), built.v0.clone()).map_err(spec_err("initial"))?;
    let observers = observers(&config.output.observers, &built)?;
    let oracle = oracle(&built, &config);

    let known = check_names();
    let suite: Vec<String> = match &config.checks.suite {
        Some(s) => s.clone(),
        None => built.default_suite.iter().map(|s| s.to_string()).collect(),
    };
    for name in &suite {
        if !known.contains(&name.as_str()) {
            return err(
                "checks.suite",
                format!("unknown check {name:?} (known: {})", known.join(", ")),
            );
        }
    }
    for (name, t) in &config.checks.tolerance {
        if !known.contains(&name.as_str()) {
            return err(&format!("checks.tolerance.{name}"), "not a known check");
        }
        if !(t.is_finite() && *t >= 0.0) {
            return err(
                &format!("checks.tolerance.{name}"),
                "must be finite and nonnegative",
            );
        }
    }
    if config.checks.points == 0 {
        return err("checks.points", "must be positive");
    }
    if suite.iter().any(|s| s == diagnostics::CONVERSE_DALEMBERT) && config.integrator.method != Method::Rk4 {
        return err(
            "checks.suite",
            "converse-dalembert needs uniformly spaced samples (integrator.method = \"rk4\")",
        );
    }
    let sweep = if suite.iter().any(|s| s == diagnostics::DIMENSION_SWEEP) {
        let Some(template) = built.sweep else {
            return err(
                "checks.suite",
                "dimension-sweep is only defined for the unit sphere and the unit-weight oscillator",
            );
        };
        let n = built.system.space().dim_x();
        let dims = config
            .checks
            .sweep_dims
            .clone()
            .unwrap_or_else(|| vec![n, n + 1, 2 * n]);
        let min = if template == SweepSystem::Sphere { 2 } else { 1 };
        if dims.first().is_none_or(|&d| d < min) || dims.windows(2).any(|w| w[1] <= w[0]) {
            return err(
                "checks.sweep_dims",
                format!("must be strictly ascending and at least {min}"),
            );
        }
        Some((template, dims))
    } else {
        None
    };

    let dir = config.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let resolve =
        |p: &Option<PathBuf>, default: String| dir.join(p.clone().unwrap_or_else(|| PathBuf::from(default)));
    let trajectory_path = resolve(&config.output.trajectory, format!("{stem}.csv"));
    let summary_path = resolve(&config.output.summary, format!("{stem}.summary.json"));
    let report_path = resolve(&config.output.report, format!("{stem}.report.json"));

    Ok(Scenario {
        system: built.system,
        z0,
        observers,
        oracle,
        quadric: built.quadric,
        suite,
        sweep,
        trajectory_path,
        summary_path,
        report_path,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPHERE: &str = r#"
        seed = 3
        [system]
        kind = "quadric"
        dim = 3
        [initial]
        x0 = [1.0, 0.0, 0.0]
        v0 = [0.0, 1.0, 0.0]
        [time]
        t_end = 1.0
    "#;

    #[test]
    fn parses_sphere() {
        let cfg = parse(SPHERE).unwrap();
        assert_eq!(cfg.seed, 3);
        let sc = build(cfg, "s", None, None).unwrap();
        assert_eq!(sc.system.name(), "quadric-geodesic");
        assert!(sc.oracle.is_some());
        assert_eq!(sc.suite.len(), 5);
        assert_eq!(sc.trajectory_path, PathBuf::from("./s.csv"));
    }

    #[test]
    fn registry_name_is_accepted_as_kind() {
        let cfg = parse(&SPHERE.replace("\"quadric\"", "\"quadric-geodesic\"")).unwrap();
        assert!(matches!(cfg.system, SystemConfig::Quadric(_)));
    }

    #[test]
    fn dimension_mismatch_names_key() {
        let cfg = parse(&SPHERE.replace("x0 = [1.0, 0.0, 0.0]", "x0 = [1.0, 0.0]")).unwrap();
        let e = build(cfg, "s", None, None).err().unwrap();
        assert_eq!(e.key, "initial.x0");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(parse(&SPHERE.replace("dim = 3", "dim = 3\nradius = 2")).is_err());
        assert!(parse(&format!("{SPHERE}\n[integrator]\nsteps = 3")).is_err());
    }

    #[test]
    fn oscillator_scalar_data() {
        let cfg = parse(
            r#"
            [system]
            kind = "oscillator"
            dim = 4
            weights = "gaussian"
            c1 = 1.0
            c2 = 1.0
            [time]
            t_end = 0.3
            "#,
        )
        .unwrap();
        let sc = build(cfg, "o", Some(Path::new("/tmp/x")), Some(9)).unwrap();
        assert_eq!(sc.z0.x.len(), 4);
        assert!(matches!(sc.oracle, Some(Oracle::Oscillator(_))));
        assert_eq!(sc.config.seed, 9);
        assert_eq!(sc.summary_path, PathBuf::from("/tmp/x/o.summary.json"));
    }

    #[test]
    fn lagrange_config() {
        let cfg = parse(
            r#"
            [system]
            kind = "lagrange"
            g = [[2.0, 0.0], [0.0, 1.0]]
            stiffness = [[1.0, 0.0], [0.0, 3.0]]
            constraint = { a = [[1.0, 1.0]] }
            [initial]
            x0 = [1.0, 0.0]
            v0 = [0.5, -0.5]
            [time]
            t_end = 1.0
            "#,
        )
        .unwrap();
        let sc = build(cfg, "l", None, None).unwrap();
        assert_eq!(sc.system.space().dim_y(), 1);
    }

    #[test]
    fn sweep_needs_sphere() {
        let text = SPHERE.replace("dim = 3", "dim = 3\nw = \"diag\"")
            + "\n[checks]\nsuite = [\"dimension-sweep\"]\n";
        let e = build(parse(&text).unwrap(), "s", None, None).err().unwrap();
        assert_eq!(e.key, "checks.suite");
    }

    #[test]
    fn bad_tolerance_key() {
        let text = format!("{SPHERE}\n[checks.tolerance]\nenergyy = 1e-3\n");
        let e = build(parse(&text).unwrap(), "s", None, None).err().unwrap();
        assert_eq!(e.key, "checks.tolerance.energyy");
    }
}
