//! Crate-wide error type.
//!
//! Error payloads are plain `f64`/`String` regardless of the scalar the
//! library is instantiated with, so the error type stays non-generic.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spectral density requires omega >= 0, got {0}")]
    NegativeFrequency(f64),

    #[error("Bose occupation is singular at omega = 0; use the series limit explicitly")]
    ZeroFrequency,

    #[error("sequential rate requires a nonzero gap")]
    ZeroGap,

    #[error("matrix is not symmetric within {tol}: max asymmetry {found}")]
    NonSymmetric { found: f64, tol: f64 },

    #[error("quadrature failed to converge: {context}")]
    QuadratureFailure { context: String },

    #[error("kernel did not decay below threshold before t = {horizon}")]
    NonDecayingKernel { horizon: f64 },

    #[error("eigensolver did not converge after {iters} iterations")]
    EigenFailure { iters: usize },

    #[error("matrix is singular to working precision")]
    SingularMatrix,

    #[error("steady state is degenerate: two generator eigenvalues within {gap} of zero")]
    DegenerateSteadyState { gap: f64 },

    #[error("analytic form requires epsilon_L = epsilon_R, got {left} and {right}")]
    AsymmetricSplitting { left: f64, right: f64 },

    #[error("dominant eigenvalue changed branch inside the counting-field interval")]
    BranchCrossing,

    #[error("operation requires the {expected} scheme, generator was built for {found}")]
    SchemeMismatch { expected: String, found: String },

    #[error("need at least {need} grid points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("adaptive integrator step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("temperature {t} below supported minimum {min} (1e-3 * omega_c)")]
    TemperatureTooLow { t: f64, min: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
