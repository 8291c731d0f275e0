use thiserror::Error;

use crate::space::PhasePoint;

/// The two analytic standing assumptions a system must satisfy for the
/// reaction formula to be well posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// `|(v, P v)| >= K ||v||^2` with `K > 0`.
    Coercivity,
    /// The velocity derivative of the constraint is onto.
    Surjectivity,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hypothesis::Coercivity => write!(f, "Hypothesis 1 (coercive inertia operator)"),
            Hypothesis::Surjectivity => {
                write!(f, "Hypothesis 2 (constraint velocity derivative is onto)")
            }
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum DynamicsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid system specification: {0}")]
    InvalidSpec(String),

    #[error("{hypothesis} violated: {detail}")]
    HypothesisViolation { hypothesis: Hypothesis, detail: String },

    #[error("multiplier operator b is numerically singular (condition estimate {condition:e}); {detail}")]
    SingularB { condition: f64, detail: String },

    #[error("domain-exit at t = {t}: {detail}")]
    DomainExit { t: f64, detail: String },

    #[error("projection onto the constraint failed after {iterations} iterations (|phi| = {residual:e})")]
    ProjectionFailure {
        iterations: usize,
        residual: f64,
        last: Box<PhasePoint>,
    },

    #[error("step size underflow at t = {t}: h = {step:e}")]
    StepUnderflow { t: f64, step: f64 },
}

impl DynamicsError {
    /// Short stable tag used in reports and run summaries.
    pub fn kind(&self) -> &'static str {
        match self {
            DynamicsError::InvalidArgument(_) => "invalid-argument",
            DynamicsError::InvalidSpec(_) => "invalid-spec",
            DynamicsError::HypothesisViolation { .. } => "hypothesis-violation",
            DynamicsError::SingularB { .. } => "singular-b",
            DynamicsError::DomainExit { .. } => "domain-exit",
            DynamicsError::ProjectionFailure { .. } => "projection-failure",
            DynamicsError::StepUnderflow { .. } => "step-underflow",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DynamicsError::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = DynamicsError> = std::result::Result<T, E>;
