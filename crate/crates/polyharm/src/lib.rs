//! Radial shooting and kernel-quadrature laboratory for poly-harmonic
//! equations `Δ^m u = s·u^{-q}` with negative exponents, `m ∈ {2, 3}`.
//!
//! The crate integrates the radial initial value problem outward from a
//! series start, classifies the asymptotic growth of each trajectory,
//! checks the sign/monotonicity/bound structure of the solutions sample by
//! sample, evaluates Riesz/Newton kernel representations by spherical-mean
//! quadrature, and drives the shooting/bisection/sweep campaigns.

pub mod classify;
pub mod closed_form;
pub mod experiments;
pub mod integrate;
pub mod invariants;
pub mod kernels;
pub mod problem;
pub mod quad;
pub mod radial;
pub mod report;

pub use classify::{classify, GrowthClass, GrowthReport};
pub use closed_form::{eval_closed_form, verify_closed_form, ClosedForm};
pub use integrate::{integrate, IntegrationConfig, Termination, Trajectory};
pub use problem::{Order, OriginData, ProblemSpec, State};

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum PolyharmError {
    #[error("invalid problem data: {0}")]
    InvalidSpec(String),
    #[error("operation undefined at r = 0")]
    OriginNotAllowed,
    #[error("state no longer positive at r = {r}")]
    ExtinctState { r: f64 },
    #[error("λ extraction failed: {0}")]
    NonConstantLambda(String),
    #[error("radius out of trajectory range: {0}")]
    OutOfRange(f64),
    #[error("operation requires spec {expected}, got {got}")]
    WrongSpec { expected: String, got: String },
    #[error("quadrature could not meet tolerance: {0}")]
    QuadratureFailure(String),
    #[error("kernel mean is non-integrable on the diagonal for this dimension")]
    SingularDiagonal,
    #[error("integrand does not decay; tail remainder {remainder:.3e} exceeds 10% of partial sum {partial:.3e}")]
    NonDecayingIntegrand { remainder: f64, partial: f64 },
    #[error("growth class {0} makes the kernel integral diverge")]
    NonIntegrableTail(String),
    #[error("kernel tail estimate {tail:.3e} exceeds 5% of result {value:.3e}")]
    TailDominates { tail: f64, value: f64 },
    #[error("v has not settled: {0}")]
    NotSettled(String),
    #[error("bracket endpoints classify identically: {0}")]
    BracketInvalid(String),
    #[error("no linear window found; final bracket [{lo}, {hi}]")]
    NoLinearWindow { lo: f64, hi: f64 },
    #[error("comparison hypothesis violated numerically: U dips below V by {0:.3e}")]
    HypothesisViolated(f64),
    #[error("check not applicable: {0}")]
    NotApplicable(String),
    #[error("io failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for PolyharmError {
    fn from(e: std::io::Error) -> Self {
        PolyharmError::Io(e.to_string())
    }
}
