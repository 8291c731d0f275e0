//! Reaction forces of ideal constraints for mechanics-like systems
//! `x'' = P(z) (f(z) + N(z))` on finite-dimensional truncations of Hilbert
//! spaces, with constrained time integration, analytic model systems and
//! executable checks of the associated structural theorems.
//!
//! The reaction of a constraint `phi(t, x, x') = 0` is
//!
//! ```text
//! N = -phi_v' b^{-1} (phi_t + phi_x v + phi_v P f),    b = phi_v P phi_v'
//! ```
//!
//! It keeps `phi` constant along the flow and does no work on virtual
//! displacements `ker phi_v`.

// `!(a > b)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod models;
pub mod reaction;
pub mod space;

pub use error::{DynamicsError, Hypothesis, Result};
pub use integrator::{
    integrate, project_onto_constraint, step, IntegrationFailure, IntegratorConfig, Method, Observer,
    Projection, Trajectory,
};
pub use reaction::{
    assemble_b, constrained_acceleration, dalembert_residual, reaction_force, solve_multipliers,
    ConstraintJet, Domain, Inertia, ReactionOutput, SystemModel,
};
pub use space::{coercivity_estimate, LinearMap, PhasePoint, SpaceSpec};
