//! Scalar abstraction: the library is generic over the real floating-point
//! type, with complex arithmetic built on top via `nalgebra::Complex`.

use nalgebra::{Complex, ComplexField, RealField};

/// Real floating-point scalar the library is generic over: `f32` or `f64`.
///
/// The two associated thresholds pin the numeric contracts that depend on the
/// working precision; all documented tolerances refer to the `f64` values.
pub trait Scalar: RealField + Copy + Default {
    /// Slack allowed on identities that hold exactly in real arithmetic
    /// (unit determinants, hermiticity of assembled products).
    fn identity_slack() -> Self;

    /// Relative eigenvalue cutoff below which a Hermitian block is not
    /// considered positive definite.
    fn positivity_cutoff() -> Self;
}

impl Scalar for f64 {
    fn identity_slack() -> f64 {
        1e-12
    }
    fn positivity_cutoff() -> f64 {
        1e-10
    }
}

impl Scalar for f32 {
    fn identity_slack() -> f32 {
        1e-5
    }
    fn positivity_cutoff() -> f32 {
        1e-4
    }
}

/// Convert an `f64` literal into the working scalar type.
#[inline]
pub fn t<T: Scalar>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Convert a nonnegative integer into the working scalar type.
#[inline]
pub fn ti<T: Scalar>(n: usize) -> T {
    nalgebra::convert(n as f64)
}

/// Read a scalar back as `f64` (diagnostics and error payloads).
#[inline]
pub fn as_f64<T: Scalar>(x: T) -> f64 {
    nalgebra::try_convert(x).unwrap_or(f64::NAN)
}

/// Complex value from `f64` parts.
#[inline]
pub fn cx<T: Scalar>(re: f64, im: f64) -> Complex<T> {
    Complex::new(t(re), t(im))
}

/// Complex value with zero imaginary part.
#[inline]
pub fn re<T: Scalar>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// Complex zero.
#[inline]
pub fn czero<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Complex one.
#[inline]
pub fn cone<T: Scalar>() -> Complex<T> {
    Complex::new(T::one(), T::zero())
}

/// Principal complex logarithm.
#[inline]
pub fn cln<T: Scalar>(z: Complex<T>) -> Complex<T> {
    ComplexField::ln(z)
}

/// Complex exponential.
#[inline]
pub fn cexp<T: Scalar>(z: Complex<T>) -> Complex<T> {
    ComplexField::exp(z)
}

/// Principal power `z^p` with a real exponent.
#[inline]
pub fn cpowf<T: Scalar>(z: Complex<T>, p: T) -> Complex<T> {
    ComplexField::powf(z, p)
}

/// Unit complex number `e^{i theta}`.
#[inline]
pub fn cis<T: Scalar>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Modulus of a complex value.
#[inline]
pub fn cabs<T: Scalar>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}
