//! Built-in systems with closed-form oracles: geodesics on a quadric
//! `(x, W x) = 1`, the energy-constrained oscillator on a quadrature
//! discretization of `L^2(R, mu)`, and Lagrangian systems `T - V`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{DynamicsError, Hypothesis, Result};
use crate::reaction::{ConstraintJet, Domain, Inertia, SystemModel, Unbounded, COERCIVITY_FLOOR};
use crate::space::{chord_min_norm, coercivity_estimate, LinearMap, PhasePoint, SpaceSpec};

/// Default lower bound on `||W x||`, `||x||` and `||v||` realizing the
/// open domains of the built-in systems.
pub const DOMAIN_FLOOR: f64 = 1e-8;

const SPEC_TOL: f64 = 1e-12;

pub const QUADRIC_GEODESIC: &str = "quadric-geodesic";
pub const ENERGY_OSCILLATOR: &str = "energy-oscillator";
pub const LAGRANGE: &str = "lagrange";

// ---------------------------------------------------------------------------
// Quadric geodesics

/// The quadric `(x, W x) = 1` and an optional generator `Omega` of a
/// rotation group preserving it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadricSpec {
    w: LinearMap,
    omega: Option<LinearMap>,
}

impl QuadricSpec {
    pub fn new(w: LinearMap, omega: Option<LinearMap>) -> Result<Self> {
        if !w.is_square() {
            return Err(DynamicsError::InvalidSpec("W must be square".into()));
        }
        if w.matrix().norm() == 0.0 {
            return Err(DynamicsError::InvalidSpec("W must be nonzero".into()));
        }
        if !w.is_symmetric(SPEC_TOL) {
            return Err(DynamicsError::InvalidSpec("W must be symmetric".into()));
        }
        if let Some(om) = &omega {
            if om.shape() != w.shape() {
                return Err(DynamicsError::InvalidSpec(
                    "Omega must have the shape of W".into(),
                ));
            }
            let scale = om.matrix().norm().max(1.0);
            if (om.matrix() + om.transpose()).norm() > SPEC_TOL * scale {
                return Err(DynamicsError::InvalidSpec("Omega must be antisymmetric".into()));
            }
            let comm = w.matrix() * om.matrix() - om.matrix() * w.matrix();
            if comm.norm() > SPEC_TOL * scale * w.matrix().norm().max(1.0) {
                return Err(DynamicsError::InvalidSpec("Omega must commute with W".into()));
            }
        }
        Ok(Self { w, omega })
    }

    pub fn sphere(dim: usize) -> Self {
        Self {
            w: LinearMap::identity(dim),
            omega: None,
        }
    }

    pub fn w(&self) -> &LinearMap {
        &self.w
    }

    pub fn omega(&self) -> Option<&LinearMap> {
        self.omega.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    /// `g(x) = (x, W x) - 1`.
    pub fn level(&self, space: &SpaceSpec, x: &DVector<f64>) -> f64 {
        space.inner_unchecked(x, &(self.w.matrix() * x)) - 1.0
    }

    /// The first integral `(x, Omega v)`, if a generator is present.
    pub fn rotation_integral(&self, space: &SpaceSpec, z: &PhasePoint) -> Option<f64> {
        self.omega
            .as_ref()
            .map(|om| space.inner_unchecked(&z.x, &(om.matrix() * &z.v)))
    }

    /// Closed-form geodesic field `-((v, W v) / ||W x||^2) W x`.
    pub fn geodesic_field(&self, space: &SpaceSpec, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let wx = self.w.matrix() * x;
        let wv = self.w.matrix() * v;
        let k = space.inner_unchecked(v, &wv) / space.inner_unchecked(&wx, &wx);
        wx * -k
    }
}

/// `||W x|| >= floor`, checked at points and along chords.
#[derive(Debug, Clone)]
struct QuadricDomain {
    w: DMatrix<f64>,
    space: SpaceSpec,
    floor: f64,
}

impl Domain for QuadricDomain {
    fn check(&self, z: &PhasePoint) -> std::result::Result<(), String> {
        let n = self.space.norm(&(&self.w * &z.x));
        if n >= self.floor {
            Ok(())
        } else {
            Err(format!(
                "||W x|| = {n:e} is below the domain floor {:e}",
                self.floor
            ))
        }
    }

    fn check_chord(&self, from: &PhasePoint, to: &PhasePoint) -> std::result::Result<(), String> {
        self.check(to)?;
        let n = chord_min_norm(&self.space, &(&self.w * &from.x), &(&self.w * &to.x));
        if n >= self.floor {
            Ok(())
        } else {
            Err(format!(
                "the step from t = {} to t = {} crosses ker W (||W x|| reaches {n:e})",
                from.t, to.t
            ))
        }
    }
}

/// Geodesic flow on the quadric: `P = id`, `f = 0`, and the holonomic
/// constraint `phi = g_x(x) v = 2 (W x, v)`.
pub fn build_quadric_geodesic(spec: &QuadricSpec, space: &SpaceSpec) -> Result<SystemModel> {
    let n = space.dim_x();
    if spec.dim() != n {
        return Err(DynamicsError::InvalidSpec(format!(
            "W is {0}x{0} but dim_x = {n}",
            spec.dim()
        )));
    }
    if space.dim_y() != 1 {
        return Err(DynamicsError::InvalidSpec(
            "the quadric constraint is scalar (dim_y = 1)".into(),
        ));
    }
    // W must be self-adjoint in the weighted product, i.e. diag(w) W symmetric.
    let weighted = LinearMap::new(DMatrix::from_diagonal(space.weights()) * spec.w.matrix())?;
    if !weighted.is_symmetric(SPEC_TOL) {
        return Err(DynamicsError::InvalidSpec(
            "W is not self-adjoint with respect to the space weights".into(),
        ));
    }

    let w = spec.w.matrix().clone();
    let jet_space = space.clone();
    let jet_w = w.clone();
    let constraint = move |z: &PhasePoint| {
        let wx = &jet_w * &z.x;
        let wv = &jet_w * &z.v;
        ConstraintJet::scalar(
            2.0 * jet_space.inner_unchecked(&wx, &z.v),
            0.0,
            jet_space.functional_row(&wv) * 2.0,
            jet_space.functional_row(&wx) * 2.0,
        )
    };
    let domain = QuadricDomain {
        w,
        space: space.clone(),
        floor: DOMAIN_FLOOR,
    };
    Ok(SystemModel::new(
        QUADRIC_GEODESIC,
        space.clone(),
        move |_| Ok(Inertia::identity(n)),
        move |_| Ok(DVector::zeros(n)),
        constraint,
        domain,
    ))
}

/// Great circle through `x0` with tangent `v0` on the unit sphere:
/// `x(t) = cos(s t) x0 + sin(s t) v0 / s`, `s = ||v0||`.
pub fn quadric_closed_form_sphere(
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    t: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if x0.len() != v0.len() {
        return Err(DynamicsError::invalid("x0 and v0 must have the same length"));
    }
    if (x0.norm() - 1.0).abs() > SPEC_TOL {
        return Err(DynamicsError::invalid("x0 must lie on the unit sphere"));
    }
    if x0.dot(v0).abs() > SPEC_TOL {
        return Err(DynamicsError::invalid("v0 must be tangent at x0"));
    }
    let s = v0.norm();
    if s <= SPEC_TOL {
        return Err(DynamicsError::invalid("v0 must be nonzero"));
    }
    let (sin, cos) = (s * t).sin_cos();
    let x = x0 * cos + v0 * (sin / s);
    let v = x0 * (-s * sin) + v0 * cos;
    Ok((x, v))
}

// ---------------------------------------------------------------------------
// Energy-constrained oscillator

/// `||x|| >= floor` and `||v|| >= floor`, at points and along chords.
#[derive(Debug, Clone)]
struct PuncturedDomain {
    space: SpaceSpec,
    floor: f64,
}

impl PuncturedDomain {
    fn test(&self, what: &str, n: f64) -> std::result::Result<(), String> {
        if n >= self.floor {
            Ok(())
        } else {
            Err(format!(
                "||{what}|| = {n:e} is below the domain floor {:e}",
                self.floor
            ))
        }
    }
}

impl Domain for PuncturedDomain {
    fn check(&self, z: &PhasePoint) -> std::result::Result<(), String> {
        self.test("x", self.space.norm(&z.x))?;
        self.test("v", self.space.norm(&z.v))
    }

    fn check_chord(&self, from: &PhasePoint, to: &PhasePoint) -> std::result::Result<(), String> {
        self.check(to)?;
        for (what, a, b) in [("x", &from.x, &to.x), ("v", &from.v, &to.v)] {
            let n = chord_min_norm(&self.space, a, b);
            if !(n >= self.floor) {
                return Err(format!(
                    "{what} passes through 0 between t = {} and t = {} (min ||{what}|| = {n:e})",
                    from.t, to.t
                ));
            }
        }
        Ok(())
    }
}

/// `P = id`, `f = 0`, `phi = (||v||^2 + ||x||^2) / 2 - 1`.
pub fn build_energy_oscillator(space: &SpaceSpec) -> Result<SystemModel> {
    if space.dim_y() != 1 {
        return Err(DynamicsError::InvalidSpec(
            "the energy constraint is scalar (dim_y = 1)".into(),
        ));
    }
    let n = space.dim_x();
    let jet_space = space.clone();
    let constraint = move |z: &PhasePoint| {
        let e = 0.5 * (jet_space.inner_unchecked(&z.v, &z.v) + jet_space.inner_unchecked(&z.x, &z.x));
        ConstraintJet::scalar(
            e - 1.0,
            0.0,
            jet_space.functional_row(&z.x),
            jet_space.functional_row(&z.v),
        )
    };
    Ok(SystemModel::new(
        ENERGY_OSCILLATOR,
        space.clone(),
        move |_| Ok(Inertia::identity(n)),
        move |_| Ok(DVector::zeros(n)),
        constraint,
        PuncturedDomain {
            space: space.clone(),
            floor: DOMAIN_FLOOR,
        },
    ))
}

/// Closed-form field of the oscillator, `-(<x, v> / ||v||^2) v`.
pub fn oscillator_field(space: &SpaceSpec, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    v * -(space.inner_unchecked(x, v) / space.inner_unchecked(v, v))
}

/// Initial data `C1 = x(0)`, `C2 = x'(0)` of the oscillator.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorInit {
    pub c1: DVector<f64>,
    pub c2: DVector<f64>,
    pub space: SpaceSpec,
}

impl OscillatorInit {
    pub fn new(c1: DVector<f64>, c2: DVector<f64>, space: SpaceSpec) -> Result<Self> {
        if c1.len() != space.dim_x() || c2.len() != space.dim_x() {
            return Err(DynamicsError::invalid("C1 and C2 must have length dim_x"));
        }
        if !(space.norm(&c2) > 0.0) {
            return Err(DynamicsError::invalid("C2 must be nonzero"));
        }
        Ok(Self { c1, c2, space })
    }

    /// `(||C2||^2 + ||C1||^2) / 2`.
    pub fn energy(&self) -> f64 {
        0.5 * (self.space.inner_unchecked(&self.c2, &self.c2)
            + self.space.inner_unchecked(&self.c1, &self.c1))
    }

    /// Whether the data lies on the constraint surface (energy 1).
    pub fn is_on_constraint(&self) -> bool {
        (self.energy() - 1.0).abs() <= SPEC_TOL
    }

    /// `c = <C1, C2> / ||C2||^2`.
    pub fn coupling(&self) -> f64 {
        self.space.inner_unchecked(&self.c1, &self.c2) / self.space.inner_unchecked(&self.c2, &self.c2)
    }

    pub fn phase_point(&self) -> PhasePoint {
        PhasePoint {
            t: 0.0,
            x: self.c1.clone(),
            v: self.c2.clone(),
        }
    }
}

/// `u(t) = sin t + c (cos t - 1)` and its derivative, solving
/// `u'' + u + c = 0`, `u(0) = 0`, `u'(0) = 1`.
pub fn oscillator_amplitude(c: f64, t: f64) -> (f64, f64) {
    let (s, co) = t.sin_cos();
    (s + c * (co - 1.0), co - c * s)
}

/// `x(t) = C1 + u(t) C2`, `x'(t) = u'(t) C2`. Total in `t`; a classical
/// solution only while `u'(t) != 0`.
pub fn oscillator_closed_form(init: &OscillatorInit, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let n2 = init.space.inner_unchecked(&init.c2, &init.c2);
    if !(n2 > 0.0) {
        return Err(DynamicsError::invalid("C2 must be nonzero"));
    }
    let (u, du) = oscillator_amplitude(init.coupling(), t);
    Ok((&init.c1 + &init.c2 * u, &init.c2 * du))
}

// ---------------------------------------------------------------------------
// Lagrangian systems

type MassFn = dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync;
type GradFn = dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync;
type PhaseFn = dyn Fn(&PhasePoint) -> DVector<f64> + Send + Sync;

/// Analytic derivatives of the kinetic energy `T = (v, G(t, x) v) / 2`.
#[derive(Clone)]
pub struct MassPartials {
    /// `T_{v t} = G_t v`.
    pub dvt: Arc<PhaseFn>,
    /// `T_{v x} v = sum_k (d G / d x_k) v v_k`.
    pub dvx_v: Arc<PhaseFn>,
    /// `T_x`, with components `(v, (d G / d x_k) v) / 2`.
    pub dx: Arc<PhaseFn>,
}

/// `L = T - V` with generalized force `Q`.
#[derive(Clone)]
pub struct LagrangeData {
    mass: Arc<MassFn>,
    potential_grad: Arc<GradFn>,
    applied_force: Option<Arc<PhaseFn>>,
    mass_partials: Option<MassPartials>,
}

impl LagrangeData {
    pub fn new<M, V>(mass: M, potential_grad: V) -> Self
    where
        M: Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        V: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            mass: Arc::new(mass),
            potential_grad: Arc::new(potential_grad),
            applied_force: None,
            mass_partials: None,
        }
    }

    /// Constant mass matrix `G` and quadratic potential `V = (x, K x) / 2`.
    pub fn quadratic(g: DMatrix<f64>, k: DMatrix<f64>) -> Self {
        Self::new(move |_, _| g.clone(), move |_, x| &k * x)
    }

    pub fn with_applied_force<Q>(mut self, q: Q) -> Self
    where
        Q: Fn(&PhasePoint) -> DVector<f64> + Send + Sync + 'static,
    {
        self.applied_force = Some(Arc::new(q));
        self
    }

    pub fn with_mass_partials(mut self, partials: MassPartials) -> Self {
        self.mass_partials = Some(partials);
        self
    }

    pub fn mass(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        (self.mass)(t, x)
    }

    /// `f = Q - T_{v t} - T_{v x} v - V_x + T_x`.
    pub fn reduced_force(&self, z: &PhasePoint) -> DVector<f64> {
        let n = z.dim();
        let q = self
            .applied_force
            .as_ref()
            .map(|q| q(z))
            .unwrap_or_else(|| DVector::zeros(n));
        let vx = (self.potential_grad)(z.t, &z.x);
        let (dvt, dvx_v, dx) = match &self.mass_partials {
            Some(p) => ((p.dvt)(z), (p.dvx_v)(z), (p.dx)(z)),
            None => self.mass_partials_fd(z),
        };
        q - dvt - dvx_v - vx + dx
    }

    /// Central differences with step `cbrt(eps) * max(1, |coordinate|)`.
    fn mass_partials_fd(&self, z: &PhasePoint) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let n = z.dim();
        let h0 = f64::EPSILON.cbrt();

        let ht = h0 * z.t.abs().max(1.0);
        let g_t = ((self.mass)(z.t + ht, &z.x) - (self.mass)(z.t - ht, &z.x)) / (2.0 * ht);
        let dvt = g_t * &z.v;

        let mut dvx_v = DVector::zeros(n);
        let mut dx = DVector::zeros(n);
        for k in 0..n {
            let hk = h0 * z.x[k].abs().max(1.0);
            let mut xp = z.x.clone();
            let mut xm = z.x.clone();
            xp[k] += hk;
            xm[k] -= hk;
            let g_k = ((self.mass)(z.t, &xp) - (self.mass)(z.t, &xm)) / (2.0 * hk);
            let gk_v = g_k * &z.v;
            dvx_v += &gk_v * z.v[k];
            dx[k] = 0.5 * z.v.dot(&gk_v);
        }
        (dvt, dvx_v, dx)
    }
}

fn checked_mass(data: &LagrangeData, space: &SpaceSpec, t: f64, x: &DVector<f64>) -> Result<LinearMap> {
    let g = LinearMap::new(data.mass(t, x))?;
    if g.shape() != (space.dim_x(), space.dim_x()) {
        return Err(DynamicsError::InvalidSpec(format!(
            "mass operator is {}x{} for dim_x = {}",
            g.rows(),
            g.cols(),
            space.dim_x()
        )));
    }
    if !g.is_symmetric(SPEC_TOL) {
        return Err(DynamicsError::InvalidSpec(
            "mass operator G must be symmetric".into(),
        ));
    }
    let k = coercivity_estimate(&g, space, 1, 0)?;
    if !(k > COERCIVITY_FLOOR) {
        return Err(DynamicsError::HypothesisViolation {
            hypothesis: Hypothesis::Coercivity,
            detail: format!(
                "mass operator at t = {t} has coercivity {k:e}, below the floor {COERCIVITY_FLOOR:e}; P = G^-1 is not well defined"
            ),
        });
    }
    Ok(g)
}

/// System `x'' = G^{-1}(f + N)` for the Lagrangian data. `G` is checked
/// for symmetry and coercivity at every evaluation and once at
/// `(t, x) = (0, 0)` on construction.
pub fn build_lagrange_system<C>(data: LagrangeData, constraint: C, space: &SpaceSpec) -> Result<SystemModel>
where
    C: Fn(&PhasePoint) -> Result<ConstraintJet> + Send + Sync + 'static,
{
    checked_mass(&data, space, 0.0, &DVector::zeros(space.dim_x()))?;
    let inertia_data = data.clone();
    let inertia_space = space.clone();
    Ok(SystemModel::new(
        LAGRANGE,
        space.clone(),
        move |z: &PhasePoint| checked_mass(&inertia_data, &inertia_space, z.t, &z.x).map(Inertia::InverseOf),
        move |z: &PhasePoint| Ok(data.reduced_force(z)),
        constraint,
        Unbounded,
    ))
}

/// Constraint `phi = A v + B x - c`, affine in `(x, v)`.
pub fn affine_constraint(
    a: DMatrix<f64>,
    b: Option<DMatrix<f64>>,
    c: Option<DVector<f64>>,
) -> Result<impl Fn(&PhasePoint) -> Result<ConstraintJet> + Send + Sync + Clone + 'static> {
    let m = a.nrows();
    let n = a.ncols();
    let b = b.unwrap_or_else(|| DMatrix::zeros(m, n));
    let c = c.unwrap_or_else(|| DVector::zeros(m));
    if b.shape() != (m, n) || c.len() != m {
        return Err(DynamicsError::InvalidSpec(
            "affine constraint blocks have inconsistent shapes".into(),
        ));
    }
    Ok(move |z: &PhasePoint| {
        ConstraintJet::new(
            &a * &z.v + &b * &z.x - &c,
            DVector::zeros(m),
            b.clone(),
            a.clone(),
        )
    })
}

// ---------------------------------------------------------------------------
// Reparameterization

/// Families `sigma = U(z, phi)` defining the same constraint set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reparameterization {
    /// `sigma = k phi`, `k != 0`.
    Scale(f64),
    /// `sigma_i = phi_i + phi_i^3`.
    Cubic,
}

/// Same system with the constraint replaced by `sigma`; jets follow from
/// the chain rule.
pub fn reparameterize_constraint(system: &SystemModel, family: Reparameterization) -> Result<SystemModel> {
    let inner = system.constraint_fn();
    match family {
        Reparameterization::Scale(k) => {
            if k == 0.0 || !k.is_finite() {
                return Err(DynamicsError::invalid("scale factor must be finite and nonzero"));
            }
            Ok(
                system.with_constraint(format!("{}/scale({k})", system.name()), move |z: &PhasePoint| {
                    let jet = inner(z)?;
                    let factors = DVector::from_element(jet.value().len(), k);
                    Ok(jet.scale_rows(jet.value() * k, &factors))
                }),
            )
        }
        Reparameterization::Cubic => Ok(system.with_constraint(
            format!("{}/cubic", system.name()),
            move |z: &PhasePoint| {
                let jet = inner(z)?;
                let value = jet.value().map(|p| p + p * p * p);
                let factors = jet.value().map(|p| 1.0 + 3.0 * p * p);
                Ok(jet.scale_rows(value, &factors))
            },
        )),
    }
}

// ---------------------------------------------------------------------------
// Quadrature

/// Nodes and weights of the `points`-node Gauss rule for the standard
/// normal density, returned as a probability-weighted space with scalar
/// constraint dimension.
///
/// Nodes are eigenvalues of the Jacobi matrix of the probabilists' Hermite
/// polynomials, polished by Newton steps; weights use the stable formula
/// `w_i = 1 / (n h_{n-1}(x_i)^2)` with orthonormal `h_k = He_k / sqrt(k!)`,
/// then renormalized to sum to one.
pub fn gaussian_l2_space(points: usize) -> Result<SpaceSpec> {
    if points == 0 {
        return Err(DynamicsError::invalid("at least one quadrature node is required"));
    }
    let n = points;
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    // Orthonormal Hermite values (h_n, h_{n-1}) at x.
    let hermite = |x: f64| {
        let (mut prev, mut cur) = (0.0, 1.0);
        for k in 0..n {
            let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
            prev = cur;
            cur = next;
        }
        (cur, prev)
    };
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (hn, hn1) = hermite(*x);
            let d = (n as f64).sqrt() * hn1;
            if d != 0.0 {
                *x -= hn / d;
            }
        }
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let (_, hn1) = hermite(x);
            1.0 / (n as f64 * hn1 * hn1)
        })
        .collect();

    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let imax = (0..n)
        .max_by(|&i, &j| weights[i].total_cmp(&weights[j]))
        .unwrap_or(0);
    for _ in 0..2 {
        let s: f64 = weights.iter().sum();
        weights[imax] += 1.0 - s;
    }

    SpaceSpec::new(n, 1, DVector::from_vec(weights))?.with_nodes(nodes)
}
