//! Graded homogeneous multiplier bundles over the unit disc.
//!
//! The crate builds, classifies and realizes the operators attached to a
//! pair `(eta, Y)`: a positive twist parameter together with a chain of
//! subdiagonal blocks `Y_1, ..., Y_m` acting between graded multiplicity
//! spaces.  It provides
//!
//! - disc automorphisms with branch-tracked fractional derivative powers
//!   and truncated graded power-series arithmetic ([`moebius`], [`series`]),
//! - the matrix multiplier cocycle in two independent closed forms,
//!   commutant computations, orthogonal decomposition and canonical forms
//!   ([`bundle`]),
//! - the intertwining differential operator, the normalizer solve, the
//!   kernel-existence classifier and invariant kernel evaluation
//!   ([`kernel`]),
//! - the weighted block-shift realization with boundedness and perturbation
//!   diagnostics, similarity invariants and the contraction classifier
//!   ([`shift`]),
//! - a seeded residual suite covering every identity the library claims
//!   ([`verify`]).
//!
//! All numeric code is generic over the real scalar type through
//! [`scalar::Scalar`]; the `*64` aliases at the crate root fix `f64`, which
//! is the precision every documented tolerance refers to.

pub mod bundle;
pub mod error;
pub mod kernel;
pub mod moebius;
pub mod sampling;
pub mod scalar;
pub mod series;
pub mod shift;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use nalgebra;

/// Complex double-precision scalar.
pub type C64 = nalgebra::Complex<f64>;

/// Disc automorphism at working precision.
pub type Moebius64 = moebius::MoebiusElement<f64>;

/// Bundle data `(eta, Y)` at working precision.
pub type BundleSpec64 = bundle::BundleSpec<f64>;

/// Block-diagonal matrix matching a spec's grading, at working precision.
pub type BlockDiagonal64 = bundle::BlockDiagonal<f64>;

/// Truncated graded power series at working precision.
pub type GradedSeries64 = series::GradedSeries<f64>;

/// Scalar truncated power series at working precision.
pub type PowerSeries64 = series::PowerSeries<f64>;

/// Solved normalizer products at working precision.
pub type NormalizerSolution64 = kernel::NormalizerSolution<f64>;

/// Weighted block-shift realization at working precision.
pub type ShiftRealization64 = shift::ShiftRealization<f64>;
