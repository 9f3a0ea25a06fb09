use num_complex::Complex64;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("theta series needs more than {max} terms (epsilon too small for the tolerance)")]
    TruncationExhausted { max: usize },
    #[error("argument {z} is within the guard of a pole spiral")]
    NearPole { z: Complex64 },
    #[error("argument {z} lies on the branch cut")]
    OnCut { z: Complex64 },
    #[error("ill-conditioned decomposition: {0}")]
    IllConditioned(String),
    #[error("Sylvester operator is singular (resonance)")]
    SingularOperator,
    #[error("matrix is not unipotent")]
    NotUnipotent,
    #[error("determinant vanishes identically")]
    IdenticallySingular,
    #[error("pivot reduction stalled after {0} iterations")]
    MaxIterations(usize),
    #[error("system is not fuchsian at {0}")]
    NotFuchsian(&'static str),
    #[error("system is resonant: {0}")]
    Resonant(String),
    #[error("gauge series did not reach tolerance within {0} terms")]
    OrderCapExceeded(usize),
    #[error("point {z} is within the guard of a singular spiral")]
    NearSingularSpiral { z: Complex64 },
    #[error("product solution requires A(0) = I")]
    NotRegular,
    #[error("initial value is inconsistent with the system at 0")]
    InconsistentInitialValue,
    #[error("confluence ladder did not converge (error estimate {estimate:.3e} > {tol:.1e})")]
    NotConverged { estimate: f64, tol: f64 },
    #[error("spiral collision: {0}")]
    SpiralCollision(String),
    #[error("integrator failed near {z}")]
    StepFailure { z: Complex64 },
}

pub type Result<T> = std::result::Result<T, QError>;
