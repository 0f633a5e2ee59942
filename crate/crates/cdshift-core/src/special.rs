//! Pochhammer symbols, log-gamma and small combinatorial helpers.
//!
//! The log-gamma implementation follows the Lanczos approximation from
//! "An Analysis of the Lanczos Gamma Approximation", G. R. Pugh, 2004,
//! with the g = 10.900511 coefficient set (accurate to ~1e-14 relative
//! for positive arguments at double precision).

use crate::error::{Error, Result};
use crate::scalar::{as_f64, t, ti, Scalar};

/// Polynomial coefficients for the Lanczos approximation.
const GAMMA_DK: &[f64] = &[
    2.4857408913875355e-5,
    1.0514237858172197,
    -3.4568709722201625,
    4.512277094668948,
    -2.9828522532357664,
    1.056397115771267,
    -1.9542877319164587e-1,
    1.709705434044412e-2,
    -5.719261174043057e-4,
    4.633994733599057e-6,
    -2.7199490848860772e-9,
];

/// Auxiliary shift in the Lanczos approximation.
const GAMMA_R: f64 = 10.900511;

/// `ln(2 * sqrt(e / pi))`
const LN_2_SQRT_E_OVER_PI: f64 = 0.6207822376352452;

/// Rising factorial x(x+1)...(x+n-1); the empty product is 1.
pub fn pochhammer<T: Scalar>(x: T, n: usize) -> T {
    let mut acc = T::one();
    let mut cur = x;
    for _ in 0..n {
        acc *= cur;
        cur += T::one();
    }
    acc
}

/// Natural log of the gamma function for positive arguments.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    debug_assert!(x > T::zero(), "ln_gamma requires a positive argument");
    let mut s = t::<T>(GAMMA_DK[0]);
    // All arguments in this crate are positive; the x < 0.5 reflection
    // branch is still provided so small eta values stay accurate.
    if x < t(0.5) {
        for (i, &dk) in GAMMA_DK.iter().enumerate().skip(1) {
            s += t::<T>(dk) / (ti::<T>(i) - x);
        }
        T::pi().ln()
            - (T::pi() * x).sin().ln()
            - s.ln()
            - t(LN_2_SQRT_E_OVER_PI)
            - (t::<T>(0.5) - x) * ((t::<T>(0.5) - x + t(GAMMA_R)) / T::e()).ln()
    } else {
        for (i, &dk) in GAMMA_DK.iter().enumerate().skip(1) {
            s += t::<T>(dk) / (x + ti::<T>(i) - T::one());
        }
        s.ln() + t(LN_2_SQRT_E_OVER_PI) + (x - t(0.5)) * ((x - t::<T>(0.5) + t(GAMMA_R)) / T::e()).ln()
    }
}

/// Log of the rising factorial for positive base, stable for large `n`.
pub fn ln_pochhammer<T: Scalar>(x: T, n: usize) -> Result<T> {
    if x <= T::zero() {
        return Err(Error::VanishingDenominator { value: as_f64(x) });
    }
    Ok(ln_gamma(x + ti(n)) - ln_gamma(x))
}

/// ln(n!)
pub fn ln_factorial<T: Scalar>(n: usize) -> T {
    ln_gamma(ti::<T>(n) + T::one())
}

/// Binomial coefficient as a scalar; small arguments only.
pub fn binomial<T: Scalar>(n: usize, k: usize) -> T {
    if k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    let mut acc = T::one();
    for i in 0..k {
        acc = acc * ti::<T>(n - i) / ti::<T>(i + 1);
    }
    acc
}
