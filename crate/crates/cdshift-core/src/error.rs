//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors surfaced by bundle, kernel and shift computations.
///
/// Numeric payloads are reported as `f64` regardless of the working scalar
/// type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point with |z| = {modulus} lies outside the open unit disc")]
    OutsideDisc { modulus: f64 },

    #[error("matrix [[a,b],[conj(b),conj(a)]] has |a|^2 - |b|^2 = {det}, not 1")]
    NotUnitDeterminant { det: f64 },

    #[error("branch violation: conj(b) z + conj(a) = {re}{im:+}i lies on the closed negative real axis")]
    BranchViolation { re: f64, im: f64 },

    #[error("eta must be positive, got {eta}")]
    NonPositiveEta { eta: f64 },

    #[error("derivative order {requested} exceeds the series truncation degree {truncation}")]
    TruncationExceeded { requested: usize, truncation: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported multiplicity pattern: {0}")]
    MultiplicityPattern(String),

    #[error("graded coefficient denominator vanishes (value {value})")]
    VanishingDenominator { value: f64 },

    #[error("kernel value at the requested point is numerically singular (min eigenvalue {min_eigenvalue})")]
    SingularKernel { min_eigenvalue: f64 },

    #[error("level matrix at n = {level} is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { level: usize, condition: f64 },

    #[error("weight families are not separable at the computed range: {0}")]
    NotSeparable(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
