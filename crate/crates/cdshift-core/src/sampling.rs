//! Seeded random generators for specs, group elements and test panels.
//!
//! Everything derives from a single 64-bit seed through ChaCha8, so
//! verification runs are reproducible across platforms.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bundle::{BlockDiagonal, BundleSpec};
use crate::moebius::MoebiusElement;
use crate::scalar::{cis, t, Scalar};

/// Deterministic sampler over the working scalar type.
pub struct Sampler<T: Scalar> {
    rng: ChaCha8Rng,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Sampler<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> T {
        t(self.rng.random_range(lo..hi))
    }

    /// Complex entry uniform over the square `[-1, 1]^2`.
    pub fn complex_unit_square(&mut self) -> Complex<T> {
        Complex::new(self.uniform(-1.0, 1.0), self.uniform(-1.0, 1.0))
    }

    /// Point in the closed disc of the given radius.
    pub fn disc_point(&mut self, radius: f64) -> Complex<T> {
        let r = t::<T>(radius) * self.uniform(0.0, 1.0).sqrt();
        let ang = self.uniform(-std::f64::consts::PI, std::f64::consts::PI);
        cis(ang) * Complex::new(r, T::zero())
    }

    /// Group element within parameter distance `scale` of the identity:
    /// `|b| < scale` and rotation angle `|phi| < scale`.
    pub fn moebius_near_identity(&mut self, scale: f64) -> MoebiusElement<T> {
        let b = self.disc_point(scale);
        let phi = self.uniform(-scale, scale);
        let a = cis(phi) * Complex::new((T::one() + b.norm_sqr()).sqrt(), T::zero());
        MoebiusElement::from_parts(a, b).expect("unit determinant by construction")
    }

    /// Random blocks for the given multiplicities, entries uniform in the
    /// complex unit square.
    pub fn blocks(&mut self, multiplicities: &[usize]) -> Vec<DMatrix<Complex<T>>> {
        (1..multiplicities.len())
            .map(|j| {
                DMatrix::from_fn(multiplicities[j], multiplicities[j - 1], |_, _| {
                    self.complex_unit_square()
                })
            })
            .collect()
    }

    /// Random spec with the given twist: top grade up to `max_m`,
    /// multiplicities up to `max_mult`.
    pub fn spec(&mut self, eta: T, max_m: usize, max_mult: usize) -> BundleSpec<T> {
        let m = self.rng.random_range(0..=max_m);
        let multiplicities: Vec<usize> =
            (0..=m).map(|_| self.rng.random_range(1..=max_mult)).collect();
        let blocks = self.blocks(&multiplicities);
        BundleSpec::new(eta, multiplicities, blocks).expect("sampled shapes are consistent")
    }

    /// Random spec with a fixed multiplicity pattern.
    pub fn spec_with_pattern(&mut self, eta: T, multiplicities: &[usize]) -> BundleSpec<T> {
        let blocks = self.blocks(multiplicities);
        BundleSpec::new(eta, multiplicities.to_vec(), blocks).expect("consistent shapes")
    }

    /// Haar-ish block-diagonal unitary via QR of a random complex matrix.
    pub fn block_unitary(&mut self, multiplicities: &[usize]) -> BlockDiagonal<T> {
        let blocks = multiplicities
            .iter()
            .map(|&d| {
                let raw = DMatrix::from_fn(d, d, |_, _| self.complex_unit_square());
                let qr = raw.qr();
                qr.q()
            })
            .collect();
        BlockDiagonal::new(blocks).expect("square blocks")
    }

    /// Random polynomial of the given degree, padded to `trunc`.
    pub fn polynomial(&mut self, degree: usize, trunc: usize) -> crate::series::PowerSeries<T> {
        let coeffs: Vec<Complex<T>> = (0..=degree).map(|_| self.complex_unit_square()).collect();
        crate::series::PowerSeries::polynomial(&coeffs, trunc).expect("degree <= trunc")
    }
}
