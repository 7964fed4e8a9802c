use alloc::string::String;

/// Errors produced by the numerical kernel, the offline synthesis and the
/// closed-loop simulator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is numerically singular (pivot {pivot:e} below threshold {threshold:e})")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("Hessian {hessian} at y = {y} lies outside the declared bounds [{lo}, {hi}]")]
    BoundViolation { y: f64, hessian: f64, lo: f64, hi: f64 },

    #[error("resource balance does not change sign on multiplier range [{lo:e}, {hi:e}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("C A^(k-1) B vanishes for every k <= {n}; relative degree undefined")]
    NoRelativeDegree { n: usize },

    #[error("normal-form transformation is not invertible")]
    DegenerateTransform,

    #[error("regulator equations are not solvable: {0}")]
    Unsolvable(String),

    #[error("pair (A, B) is not controllable")]
    Uncontrollable,

    #[error("pair (C, S) is not observable")]
    Unobservable,

    #[error("observer pole assignment failed after {attempts} attempts")]
    AssignmentFailure { attempts: usize },

    #[error("zero dynamics are not Hurwitz (spectral abscissa {abscissa})")]
    NotMinimumPhase { abscissa: f64 },

    #[error("high-frequency gain C A^(r-1) B is numerically zero")]
    ZeroHighFrequencyGain,

    #[error("plant (C, A, B) is not minimal")]
    NotMinimal,

    #[error("sharing graph is not connected")]
    Disconnected,

    #[error("step {dt} exceeds the limit {limit} imposed by the high-gain loop")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
