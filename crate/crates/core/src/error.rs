use thiserror::Error;

/// Errors raised by the engine. Numerical payloads are reported as `f64`
/// regardless of the working scalar type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("duplicate interaction entry ({i},{j})")]
    DuplicateEntry { i: usize, j: usize },
    #[error("missing interaction entry ({i},{j})")]
    MissingEntry { i: usize, j: usize },
    #[error("diagonal entry ({i},{i}) has arg {arg}, expected 0 or pi")]
    NonRealDiagonal { i: usize, arg: f64 },
    #[error("level index {index} out of range 1..={dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("mask removes every row of a {dim}x{dim} matrix")]
    EmptyResult { dim: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("singular linear system (pivot {pivot:e} below {threshold:e})")]
    SingularSystem { pivot: f64, threshold: f64 },
    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("Jacobi sweeps did not converge (off-diagonal norm {off_norm:e})")]
    OracleNoConvergence { off_norm: f64 },
    #[error("problem has {n} levels; at most {max} supported")]
    TooManyLevels { n: usize, max: usize },
    #[error("degenerate denominator |z - E| = {gap:e} at level {level}")]
    DegenerateDenominator { level: usize, gap: f64 },
    #[error("singular determinant {magnitude:e} in propagator denominator")]
    SingularDenominator { magnitude: f64 },
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("no convergence after {iterations} iterations (last {last}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        last: f64,
        residual: f64,
    },
    #[error("regularity condition violated at E = {energy} (margin {margin:e})")]
    RegularityViolated { energy: f64, margin: f64 },
    #[error("path enumeration limited to {max} levels, problem has {n}")]
    PathLimitExceeded { n: usize, max: usize },
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("unperturbed spectrum is degenerate (levels {a} and {b})")]
    DegenerateSpectrum { a: usize, b: usize },
    #[error("exact value at position {index} is zero")]
    ZeroExactValue { index: usize },
    #[error("geometric ratio {ratio} is not below 1")]
    NonconvergentRatio { ratio: f64 },
    #[error("step underflow at lambda = {lambda}")]
    StepUnderflow { lambda: f64 },
    #[error("invalid transition path: {0}")]
    InvalidPath(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
