//! Reaction forces of ideal constraints.
//!
//! For a system `x'' = P (f + N)` constrained by `phi(t, x, x') = 0`, the
//! reaction is `N = phi_v' Lambda` with multipliers solving
//!
//! ```text
//! b Lambda = -(phi_t + phi_x v + phi_v P f),    b = phi_v P phi_v'
//! ```
//!
//! where `'` is the adjoint with respect to the space's weighted product.
//! Every public operation here is a pure function of the model and the
//! phase point.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{DynamicsError, Hypothesis, Result};
use crate::space::{coercivity_estimate, LinearMap, PhasePoint, SpaceSpec};

/// Relative singular-value threshold deciding surjectivity of `phi_v` and
/// the rank of kernel bases.
pub const RANK_TOL: f64 = 1e-10;

/// Default floor for the coercivity constant of the inertia operator.
pub const COERCIVITY_FLOOR: f64 = 1e-10;

/// Reciprocal condition number of `b` below which it is reported singular.
pub const SINGULAR_B_RCOND: f64 = 1e-15;

/// One evaluation of the constraint function and its partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintJet {
    value: DVector<f64>,
    d_t: DVector<f64>,
    d_x: DMatrix<f64>,
    d_v: DMatrix<f64>,
}

impl ConstraintJet {
    pub fn new(value: DVector<f64>, d_t: DVector<f64>, d_x: DMatrix<f64>, d_v: DMatrix<f64>) -> Result<Self> {
        let m = value.len();
        if d_t.len() != m || d_x.nrows() != m || d_v.nrows() != m {
            return Err(DynamicsError::invalid(format!(
                "constraint jet rows disagree: value {m}, d_t {}, d_x {}, d_v {}",
                d_t.len(),
                d_x.nrows(),
                d_v.nrows()
            )));
        }
        if d_x.ncols() != d_v.ncols() {
            return Err(DynamicsError::invalid(
                "d_x and d_v must have the same column count",
            ));
        }
        let finite = value
            .iter()
            .chain(d_t.iter())
            .chain(d_x.iter())
            .chain(d_v.iter())
            .all(|c| c.is_finite());
        if !finite {
            return Err(DynamicsError::invalid("constraint jet has non-finite entries"));
        }
        Ok(Self { value, d_t, d_x, d_v })
    }

    /// Scalar constraint from its value and three covector rows.
    pub fn scalar(value: f64, d_t: f64, d_x: DVector<f64>, d_v: DVector<f64>) -> Result<Self> {
        Self::new(
            DVector::from_element(1, value),
            DVector::from_element(1, d_t),
            DMatrix::from_row_slice(1, d_x.len(), d_x.as_slice()),
            DMatrix::from_row_slice(1, d_v.len(), d_v.as_slice()),
        )
    }

    pub fn value(&self) -> &DVector<f64> {
        &self.value
    }

    pub fn d_t(&self) -> &DVector<f64> {
        &self.d_t
    }

    pub fn d_x(&self) -> &DMatrix<f64> {
        &self.d_x
    }

    pub fn d_v(&self) -> &DMatrix<f64> {
        &self.d_v
    }

    /// Left-multiplies every part of the jet by `diag(factors)`.
    pub(crate) fn scale_rows(&self, value: DVector<f64>, factors: &DVector<f64>) -> Self {
        let mut d_t = self.d_t.clone();
        let mut d_x = self.d_x.clone();
        let mut d_v = self.d_v.clone();
        for (i, k) in factors.iter().enumerate() {
            d_t[i] *= k;
            d_x.row_mut(i).scale_mut(*k);
            d_v.row_mut(i).scale_mut(*k);
        }
        Self { value, d_t, d_x, d_v }
    }
}

/// The operator `P(z): X' -> X`.
#[derive(Debug, Clone, PartialEq)]
pub enum Inertia {
    /// `P` given directly.
    Matrix(LinearMap),
    /// `P = G^{-1}`, applied through linear solves against `G`.
    InverseOf(LinearMap),
}

impl Inertia {
    pub fn identity(n: usize) -> Self {
        Inertia::Matrix(LinearMap::identity(n))
    }

    pub fn dim(&self) -> usize {
        match self {
            Inertia::Matrix(p) | Inertia::InverseOf(p) => p.rows(),
        }
    }

    /// `P u` for each column `u` of `rhs`.
    pub fn apply(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Inertia::Matrix(p) => Ok(p.matrix() * rhs),
            Inertia::InverseOf(g) => {
                solve_dense(g.matrix(), rhs).ok_or_else(|| DynamicsError::HypothesisViolation {
                    hypothesis: Hypothesis::Coercivity,
                    detail: "mass operator G is singular".into(),
                })
            }
        }
    }

    pub fn apply_vec(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.apply(&DMatrix::from_column_slice(u.len(), 1, u.as_slice()))?;
        Ok(m.column(0).into_owned())
    }

    /// `P^{-1} a`.
    pub fn apply_inverse(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Inertia::Matrix(p) => {
                let rhs = DMatrix::from_column_slice(a.len(), 1, a.as_slice());
                solve_dense(p.matrix(), &rhs)
                    .map(|m| m.column(0).into_owned())
                    .ok_or_else(|| DynamicsError::HypothesisViolation {
                        hypothesis: Hypothesis::Coercivity,
                        detail: "inertia operator P is singular".into(),
                    })
            }
            Inertia::InverseOf(g) => Ok(g.matrix() * a),
        }
    }

    /// Coercivity estimate of `P`. For `P = G^{-1}` this forms the explicit
    /// inverse; it is only used by checks, never by the reaction solve.
    pub fn coercivity(&self, space: &SpaceSpec, samples: usize, seed: u64) -> Result<f64> {
        match self {
            Inertia::Matrix(p) => coercivity_estimate(p, space, samples, seed),
            Inertia::InverseOf(g) => {
                let n = g.rows();
                let inv = solve_dense(g.matrix(), &DMatrix::identity(n, n)).ok_or_else(|| {
                    DynamicsError::HypothesisViolation {
                        hypothesis: Hypothesis::Coercivity,
                        detail: "mass operator G is singular".into(),
                    }
                })?;
                coercivity_estimate(&LinearMap::new(inv)?, space, samples, seed)
            }
        }
    }
}

fn solve_dense(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let lu = a.clone().full_piv_lu();
    if !lu.is_invertible() {
        return None;
    }
    let x = lu.solve(rhs)?;
    x.iter().all(|c| c.is_finite()).then_some(x)
}

/// Membership test for the open phase-space domain `M`.
pub trait Domain: Send + Sync {
    /// `Err(reason)` when `z` lies outside the domain.
    fn check(&self, z: &PhasePoint) -> std::result::Result<(), String>;

    /// Checks the straight chord between two consecutive accepted states.
    /// A path can leave and re-enter the domain between samples; domains
    /// that can detect this override the default end-point test.
    fn check_chord(&self, _from: &PhasePoint, to: &PhasePoint) -> std::result::Result<(), String> {
        self.check(to)
    }
}

/// The whole phase space.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unbounded;

impl Domain for Unbounded {
    fn check(&self, _z: &PhasePoint) -> std::result::Result<(), String> {
        Ok(())
    }
}

type InertiaFn = dyn Fn(&PhasePoint) -> Result<Inertia> + Send + Sync;
type ForceFn = dyn Fn(&PhasePoint) -> Result<DVector<f64>> + Send + Sync;
type ConstraintFn = dyn Fn(&PhasePoint) -> Result<ConstraintJet> + Send + Sync;

/// A constrained system: inertia `P`, applied force `f`, constraint jet and
/// domain. Cloning is cheap; evaluators are shared.
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    space: SpaceSpec,
    inertia: Arc<InertiaFn>,
    force: Arc<ForceFn>,
    constraint: Arc<ConstraintFn>,
    domain: Arc<dyn Domain>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("space", &self.space)
            .finish_non_exhaustive()
    }
}

impl SystemModel {
    pub fn new<I, F, C, D>(
        name: impl Into<String>,
        space: SpaceSpec,
        inertia: I,
        force: F,
        constraint: C,
        domain: D,
    ) -> Self
    where
        I: Fn(&PhasePoint) -> Result<Inertia> + Send + Sync + 'static,
        F: Fn(&PhasePoint) -> Result<DVector<f64>> + Send + Sync + 'static,
        C: Fn(&PhasePoint) -> Result<ConstraintJet> + Send + Sync + 'static,
        D: Domain + 'static,
    {
        Self {
            name: name.into(),
            space,
            inertia: Arc::new(inertia),
            force: Arc::new(force),
            constraint: Arc::new(constraint),
            domain: Arc::new(domain),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &SpaceSpec {
        &self.space
    }

    pub fn domain(&self) -> &dyn Domain {
        self.domain.as_ref()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same system with the constraint evaluator replaced.
    pub fn with_constraint<C>(&self, name: impl Into<String>, constraint: C) -> Self
    where
        C: Fn(&PhasePoint) -> Result<ConstraintJet> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            space: self.space.clone(),
            inertia: Arc::clone(&self.inertia),
            force: Arc::clone(&self.force),
            constraint: Arc::new(constraint),
            domain: Arc::clone(&self.domain),
        }
    }

    pub(crate) fn constraint_fn(&self) -> Arc<ConstraintFn> {
        Arc::clone(&self.constraint)
    }

    fn check_point(&self, z: &PhasePoint) -> Result<()> {
        if z.dim() != self.space.dim_x() {
            return Err(DynamicsError::invalid(format!(
                "phase point has dimension {} but the system has dim_x = {}",
                z.dim(),
                self.space.dim_x()
            )));
        }
        if !z.is_finite() {
            return Err(DynamicsError::invalid("phase point has non-finite components"));
        }
        self.domain
            .check(z)
            .map_err(|detail| DynamicsError::DomainExit { t: z.t, detail })
    }

    pub fn inertia(&self, z: &PhasePoint) -> Result<Inertia> {
        self.check_point(z)?;
        let p = (self.inertia)(z)?;
        if p.dim() != self.space.dim_x() {
            return Err(DynamicsError::InvalidSpec(format!(
                "inertia evaluator returned a {0}x{0} operator for dim_x = {1}",
                p.dim(),
                self.space.dim_x()
            )));
        }
        Ok(p)
    }

    pub fn force(&self, z: &PhasePoint) -> Result<DVector<f64>> {
        self.check_point(z)?;
        let f = (self.force)(z)?;
        if f.len() != self.space.dim_x() {
            return Err(DynamicsError::InvalidSpec(format!(
                "force evaluator returned length {} for dim_x = {}",
                f.len(),
                self.space.dim_x()
            )));
        }
        Ok(f)
    }

    pub fn constraint(&self, z: &PhasePoint) -> Result<ConstraintJet> {
        self.check_point(z)?;
        let jet = (self.constraint)(z)?;
        if jet.value().len() != self.space.dim_y() || jet.d_v().ncols() != self.space.dim_x() {
            return Err(DynamicsError::InvalidSpec(format!(
                "constraint jet is {}x{} but the space is {}x{}",
                jet.value().len(),
                jet.d_v().ncols(),
                self.space.dim_y(),
                self.space.dim_x()
            )));
        }
        Ok(jet)
    }

    /// Rejects the model if the inertia operator at `z` falls below `floor`.
    pub fn check_coercivity(&self, z: &PhasePoint, floor: f64) -> Result<f64> {
        let k = self.inertia(z)?.coercivity(&self.space, 256, 0)?;
        if !(k > floor) {
            return Err(DynamicsError::HypothesisViolation {
                hypothesis: Hypothesis::Coercivity,
                detail: format!("coercivity estimate {k:e} is below the floor {floor:e}"),
            });
        }
        Ok(k)
    }
}

/// Multipliers, reaction covector and the assembled `b` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionOutput {
    pub lambda: DVector<f64>,
    pub reaction: DVector<f64>,
    pub b_matrix: LinearMap,
    /// Condition number estimate of `b` (ratio of extreme singular values).
    pub condition: f64,
}

/// Everything computed on the way to the constrained acceleration.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub jet: ConstraintJet,
    pub inertia: Inertia,
    pub reaction: ReactionOutput,
    pub acceleration: DVector<f64>,
}

/// Singular values of `d_v`, checked against `RANK_TOL`.
pub(crate) fn check_surjective(d_v: &DMatrix<f64>) -> Result<()> {
    let sv = d_v.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || !(min > RANK_TOL * max) {
        return Err(DynamicsError::HypothesisViolation {
            hypothesis: Hypothesis::Surjectivity,
            detail: format!(
                "smallest singular value of phi_v is {min:e} against largest {max:e} (rank tolerance {RANK_TOL:e})"
            ),
        });
    }
    Ok(())
}

struct Assembled {
    jet: ConstraintJet,
    inertia: Inertia,
    /// `P phi_v'`, reused for the acceleration.
    p_adj: DMatrix<f64>,
    b: DMatrix<f64>,
    condition: f64,
}

fn assemble(system: &SystemModel, z: &PhasePoint) -> Result<Assembled> {
    let jet = system.constraint(z)?;
    check_surjective(jet.d_v())?;
    let inertia = system.inertia(z)?;
    let adj = system.space().adjoint(jet.d_v());
    let p_adj = inertia.apply(&adj)?;
    let b = jet.d_v() * &p_adj;

    let sv = b.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || smin <= SINGULAR_B_RCOND * smax {
        return Err(DynamicsError::SingularB {
            condition,
            detail: format!(
                "phi_v passed the rank check, so {} fails along the constraint normals",
                Hypothesis::Coercivity
            ),
        });
    }
    Ok(Assembled {
        jet,
        inertia,
        p_adj,
        b,
        condition,
    })
}

pub(crate) fn evaluate(system: &SystemModel, z: &PhasePoint) -> Result<Evaluation> {
    let Assembled {
        jet,
        inertia,
        p_adj,
        b,
        condition,
    } = assemble(system, z)?;
    let force = system.force(z)?;

    let pf = inertia.apply_vec(&force)?;
    let rhs = jet.d_t() + jet.d_x() * &z.v + jet.d_v() * &pf;
    let neg_rhs = -&rhs;

    let lu = b.clone().full_piv_lu();
    let mut lambda = lu.solve(&neg_rhs).ok_or_else(|| DynamicsError::SingularB {
        condition,
        detail: "dense factorization of b failed".into(),
    })?;
    // One step of refinement.
    let r = &neg_rhs - &b * &lambda;
    if let Some(d) = lu.solve(&r) {
        lambda += d;
    }
    let residual = (&b * &lambda - &neg_rhs).norm();
    if !(residual <= 1e-12 * (b.norm() * lambda.norm() + rhs.norm())) {
        return Err(DynamicsError::SingularB {
            condition,
            detail: format!("multiplier solve residual {residual:e} exceeds the solve tolerance"),
        });
    }

    let reaction = system.space().adjoint(jet.d_v()) * &lambda;
    let acceleration = &pf + &p_adj * &lambda;

    Ok(Evaluation {
        jet,
        inertia,
        reaction: ReactionOutput {
            lambda,
            reaction,
            b_matrix: LinearMap::new(b)?,
            condition,
        },
        acceleration,
    })
}

/// `b(z) = phi_v P phi_v'`.
pub fn assemble_b(system: &SystemModel, z: &PhasePoint) -> Result<LinearMap> {
    LinearMap::new(assemble(system, z)?.b)
}

/// Multipliers `Lambda(z) = -b^{-1}(phi_t + phi_x v + phi_v P f)`.
pub fn solve_multipliers(system: &SystemModel, z: &PhasePoint) -> Result<DVector<f64>> {
    Ok(evaluate(system, z)?.reaction.lambda)
}

/// Reaction of the ideal constraint, `N = phi_v' Lambda`.
pub fn reaction_force(system: &SystemModel, z: &PhasePoint) -> Result<ReactionOutput> {
    Ok(evaluate(system, z)?.reaction)
}

/// `x'' = P (f + N)`.
pub fn constrained_acceleration(system: &SystemModel, z: &PhasePoint) -> Result<DVector<f64>> {
    Ok(evaluate(system, z)?.acceleration)
}

/// Orthonormal (Euclidean) basis of `ker a`, from the SVD of `a` padded to
/// a square matrix. Singular values at or below `rank_tol * max` count as
/// zero; larger singular values are assigned to the row space first.
pub fn kernel_basis(a: &DMatrix<f64>, rank_tol: f64) -> Vec<DVector<f64>> {
    let n = a.ncols();
    let mut square = DMatrix::zeros(n.max(a.nrows()), n);
    square.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = svd.singular_values;
    let max = sv.max();
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    order
        .into_iter()
        .filter(|&i| !(sv[i] > rank_tol * max) || max == 0.0)
        .map(|i| v_t.row(i).transpose())
        .collect()
}

/// Lagrange-D'Alembert residual of a candidate acceleration.
///
/// With `r = P^{-1} accel - f`, returns `max_j |<r, xi_j>| / max(1, ||r||)`
/// over an orthonormal basis `{xi_j}` of `ker phi_v`. It vanishes exactly
/// when `ker phi_v` is contained in `ker r`.
pub fn dalembert_residual(system: &SystemModel, z: &PhasePoint, accel: &DVector<f64>) -> Result<f64> {
    if accel.len() != system.space().dim_x() {
        return Err(DynamicsError::invalid(format!(
            "acceleration has length {} for dim_x = {}",
            accel.len(),
            system.space().dim_x()
        )));
    }
    let jet = system.constraint(z)?;
    let inertia = system.inertia(z)?;
    let f = system.force(z)?;
    let r = inertia.apply_inverse(accel)? - f;
    let space = system.space();
    let scale = space.norm(&r).max(1.0);
    Ok(kernel_basis(jet.d_v(), RANK_TOL)
        .iter()
        .map(|xi| space.inner_unchecked(&r, xi).abs())
        .fold(0.0, f64::max)
        / scale)
}
