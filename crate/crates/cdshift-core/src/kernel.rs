//! The intertwining differential operator, the normalizer solve, the
//! kernel-existence classifier and invariant kernel evaluation.
//!
//! The graded differential operator maps a tuple of scalar-type series into
//! the bundle's section space:
//!
//! ```text
//! (G f)_l = sum_{j <= l} 1/((l-j)! (2 eta + 2j)_{l-j}) Y_l ... Y_{j+1} f_j^{(l-j)}
//! ```
//!
//! Requiring the kernel value at the origin to be the identity produces a
//! triangular system for the Hermitian products `P_j = N_j N_j^*`, solved by
//! forward recursion; an independent closed form for the same products is
//! implemented alongside and the two are kept equal by tests.  The kernel
//! exists precisely when `eta > 0` and every `P_j` is positive definite; the
//! sharp twist threshold is found by bisection on that predicate.

use nalgebra::{Complex, DMatrix};

use crate::bundle::{max_abs, multiplier, BlockDiagonal, BundleSpec};
use crate::error::{Error, Result};
use crate::moebius::{check_in_disc, MoebiusElement};
use crate::scalar::{as_f64, cone, cpowf, czero, re, t, ti, Scalar};
use crate::series::GradedSeries;
use crate::special::pochhammer;

/// Coefficient `1 / ((l-j)! (2 eta + 2 j)_{l-j})` of the graded operator.
pub fn gamma_coeff<T: Scalar>(eta: T, l: usize, j: usize) -> Result<T> {
    debug_assert!(l >= j);
    let poch = pochhammer(eta + eta + ti::<T>(2 * j), l - j);
    if poch.abs() <= T::identity_slack() * T::identity_slack() {
        return Err(Error::VanishingDenominator {
            value: as_f64(poch),
        });
    }
    let mut fact = T::one();
    for k in 1..=(l - j) {
        fact *= ti::<T>(k);
    }
    Ok(T::one() / (fact * poch))
}

/// Apply the graded operator (optionally precomposed with a block-diagonal
/// normalizer) to a graded series.
///
/// Component `l` of the output collects the `(l-j)`-th derivatives of the
/// grade-`j` inputs; the exactness watermark drops by the top grade.
pub fn gamma_apply<T: Scalar>(
    spec: &BundleSpec<T>,
    normalizer: Option<&BlockDiagonal<T>>,
    f: &GradedSeries<T>,
) -> Result<GradedSeries<T>> {
    if f.multiplicities() != spec.multiplicities() {
        return Err(Error::ShapeMismatch(
            "series grading does not match the spec".into(),
        ));
    }
    if let Some(n) = normalizer {
        n.check_shape(spec.multiplicities())?;
    }
    let m = spec.top_grade();
    if f.trunc() < m {
        return Err(Error::TruncationExceeded {
            requested: m,
            truncation: f.trunc(),
        });
    }
    let out_trunc = f.trunc() - m;
    let mut out = GradedSeries::zero(spec.multiplicities(), out_trunc);

    for j in 0..=m {
        let mut grade = f.grade_coeffs(j);
        if let Some(n) = normalizer {
            for c in grade.iter_mut() {
                *c = n.block(j) * &*c;
            }
        }
        for l in j..=m {
            let order = l - j;
            // Termwise derivative of order `order`.
            let mut derived = Vec::with_capacity(out_trunc + 1);
            for deg in 0..=out_trunc {
                let src = deg + order;
                let mut fall = T::one();
                for i in 0..order {
                    fall *= ti::<T>(src - i);
                }
                derived.push(&grade[src] * re(fall));
            }
            let coeff = gamma_coeff(spec.eta(), l, j)?;
            let yprod = spec.y_product(l, j) * re(coeff);
            let mut target = out.grade_coeffs(l);
            for (deg, d) in derived.iter().enumerate() {
                target[deg] += &yprod * d;
            }
            out.set_grade_coeffs(l, &target);
        }
    }
    out.lower_exact(f.exact_degree().saturating_sub(m));
    Ok(out)
}

/// The Hermitian products `P_j = N_j N_j^*` normalizing the kernel at the
/// origin, with per-block positivity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizerSolution<T: Scalar> {
    products: Vec<DMatrix<Complex<T>>>,
    min_eigenvalues: Vec<T>,
    max_eigenvalues: Vec<T>,
    positive: Vec<bool>,
}

impl<T: Scalar> NormalizerSolution<T> {
    fn from_raw(products: Vec<DMatrix<Complex<T>>>) -> Self {
        let mut min_eigenvalues = Vec::with_capacity(products.len());
        let mut max_eigenvalues = Vec::with_capacity(products.len());
        let mut positive = Vec::with_capacity(products.len());
        for p in &products {
            let eig = p.clone().symmetric_eigen();
            let mut lo = eig.eigenvalues[0];
            let mut hi = eig.eigenvalues[0];
            for &v in eig.eigenvalues.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            min_eigenvalues.push(lo);
            max_eigenvalues.push(hi);
            positive.push(lo > T::positivity_cutoff() * hi.abs().max(T::one()));
        }
        Self {
            products,
            min_eigenvalues,
            max_eigenvalues,
            positive,
        }
    }

    /// Wrap externally supplied products (shape- and hermiticity-checked).
    pub fn from_products(
        spec: &BundleSpec<T>,
        products: Vec<DMatrix<Complex<T>>>,
    ) -> Result<Self> {
        if products.len() != spec.multiplicities().len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} normalizer products, got {}",
                spec.multiplicities().len(),
                products.len()
            )));
        }
        for (j, (p, &d)) in products.iter().zip(spec.multiplicities()).enumerate() {
            if p.nrows() != d || p.ncols() != d {
                return Err(Error::ShapeMismatch(format!(
                    "normalizer product {j} must be {d}x{d}"
                )));
            }
            if max_abs(&(p - p.adjoint())) > t(1e-10) {
                return Err(Error::ShapeMismatch(format!(
                    "normalizer product {j} is not Hermitian"
                )));
            }
        }
        Ok(Self::from_raw(products))
    }

    /// The identity normalizer (`N = I`).
    pub fn identity(spec: &BundleSpec<T>) -> Self {
        Self::from_raw(
            spec.multiplicities()
                .iter()
                .map(|&d| DMatrix::identity(d, d))
                .collect(),
        )
    }

    pub fn product(&self, j: usize) -> &DMatrix<Complex<T>> {
        &self.products[j]
    }

    pub fn products(&self) -> &[DMatrix<Complex<T>>] {
        &self.products
    }

    pub fn min_eigenvalues(&self) -> &[T] {
        &self.min_eigenvalues
    }

    pub fn positive_flags(&self) -> &[bool] {
        &self.positive
    }

    pub fn all_positive(&self) -> bool {
        self.positive.iter().all(|&p| p)
    }

    /// Largest blockwise deviation from another solution.
    pub fn max_difference(&self, other: &Self) -> T {
        self.products
            .iter()
            .zip(&other.products)
            .map(|(a, b)| max_abs(&(a - b)))
            .fold(T::zero(), |acc, v| acc.max(v))
    }
}

fn hermitize<T: Scalar>(m: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    (m + m.adjoint()) * re(t::<T>(0.5))
}

fn require_positive_eta<T: Scalar>(eta: T) -> Result<()> {
    if eta <= T::zero() {
        return Err(Error::NonPositiveEta { eta: as_f64(eta) });
    }
    Ok(())
}

/// Solve the origin-normalization system by forward recursion:
///
/// ```text
/// P_l = I - sum_{j < l} 1/((l-j)! (2 eta + 2j)_{l-j}) Y_l..Y_{j+1} P_j Y_{j+1}^*..Y_l^*
/// ```
///
/// with `P_0 = I`; this is the unique solution with that normalization.
pub fn solve_normalizer<T: Scalar>(spec: &BundleSpec<T>) -> Result<NormalizerSolution<T>> {
    require_positive_eta(spec.eta())?;
    let m = spec.top_grade();
    let mut products: Vec<DMatrix<Complex<T>>> = Vec::with_capacity(m + 1);
    for l in 0..=m {
        let d = spec.multiplicities()[l];
        let mut p = DMatrix::identity(d, d);
        for j in 0..l {
            let coeff = gamma_coeff(spec.eta(), l, j)?;
            let yprod = spec.y_product(l, j);
            p -= (&yprod * &products[j] * yprod.adjoint()) * re(coeff);
        }
        products.push(hermitize(&p));
    }
    Ok(NormalizerSolution::from_raw(products))
}

/// The same products in closed form:
///
/// ```text
/// P_j = sum_{k=0}^{j} (-1)^{j+k} / ((j-k)! (2 eta + j + k - 1)_{j-k})
///       Y_j..Y_{k+1} Y_{k+1}^*..Y_j^*
/// ```
pub fn closed_form_normalizer<T: Scalar>(spec: &BundleSpec<T>) -> Result<NormalizerSolution<T>> {
    require_positive_eta(spec.eta())?;
    let m = spec.top_grade();
    let mut products = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let d = spec.multiplicities()[j];
        let mut p: DMatrix<Complex<T>> = DMatrix::zeros(d, d);
        for k in 0..=j {
            let order = j - k;
            let poch = pochhammer(spec.eta() + spec.eta() + ti::<T>(j + k) - T::one(), order);
            if poch.abs() <= T::identity_slack() * T::identity_slack() {
                return Err(Error::VanishingDenominator { value: as_f64(poch) });
            }
            let mut fact = T::one();
            for i in 1..=order {
                fact *= ti::<T>(i);
            }
            let sign = if order % 2 == 0 { T::one() } else { -T::one() };
            let yprod = spec.y_product(j, k);
            p += (&yprod * yprod.adjoint()) * re(sign / (fact * poch));
        }
        products.push(hermitize(&p));
    }
    Ok(NormalizerSolution::from_raw(products))
}

/// Result of the kernel-existence classifier.
#[derive(Debug, Clone)]
pub struct KernelClassification<T: Scalar> {
    /// True iff `eta > 0` and every normalizer product is positive definite.
    pub exists: bool,
    /// The witness solution; absent only when `eta <= 0`.
    pub solution: Option<NormalizerSolution<T>>,
}

/// Classify kernel existence: `eta > 0` plus positivity of every `P_j`.
pub fn kernel_exists<T: Scalar>(spec: &BundleSpec<T>) -> KernelClassification<T> {
    if spec.eta() <= T::zero() {
        return KernelClassification {
            exists: false,
            solution: None,
        };
    }
    let solution = solve_normalizer(spec).expect("eta > 0");
    KernelClassification {
        exists: solution.all_positive(),
        solution: Some(solution),
    }
}

/// Sharp twist threshold for the given blocks: positivity holds exactly for
/// twists above the returned value (up to `tol`), found by bisection with a
/// doubling upper bracket.  Positivity is monotone in the twist, so the
/// bracketing is sound.
pub fn eta_threshold<T: Scalar>(spec: &BundleSpec<T>, tol: T) -> T {
    assert!(tol > T::zero(), "tolerance must be positive");
    let positive = |eta: T| kernel_exists(&spec.with_eta(eta)).exists;
    let mut lo = t::<T>(1e-6);
    if positive(lo) {
        return T::zero();
    }
    let mut hi = T::one();
    let cap = t::<T>(1048576.0); // 2^20
    while !positive(hi) {
        hi = hi + hi;
        if hi > cap {
            return hi; // positivity always holds for large twists; defensive cap
        }
    }
    while hi - lo > tol {
        let mid = (lo + hi) * t(0.5);
        if positive(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) * t(0.5)
}

/// Kernel value together with its evaluation points.
#[derive(Debug, Clone)]
pub struct KernelMatrix<T: Scalar> {
    pub value: DMatrix<Complex<T>>,
    pub z: Complex<T>,
    pub w: Complex<T>,
}

/// Kernel value at the origin: block diagonal with
/// `(l,l)`-block `sum_{j<=l} gamma_coeff(l,j) Y_l..Y_{j+1} P_j Y_{j+1}^*..Y_l^*`.
/// With the solved normalizer this is the identity.
pub fn kernel_at_origin<T: Scalar>(
    spec: &BundleSpec<T>,
    normalizer: &NormalizerSolution<T>,
) -> Result<KernelMatrix<T>> {
    require_positive_eta(spec.eta())?;
    let offsets = spec.offsets();
    let mut out = DMatrix::from_element(spec.dim(), spec.dim(), czero());
    for l in 0..=spec.top_grade() {
        let d = spec.multiplicities()[l];
        let mut blk: DMatrix<Complex<T>> = DMatrix::zeros(d, d);
        for j in 0..=l {
            let coeff = gamma_coeff(spec.eta(), l, j)?;
            let yprod = spec.y_product(l, j);
            blk += (&yprod * normalizer.product(j) * yprod.adjoint()) * re(coeff);
        }
        out.view_mut((offsets[l], offsets[l]), (d, d)).copy_from(&blk);
    }
    Ok(KernelMatrix {
        value: out,
        z: czero(),
        w: czero(),
    })
}

/// Mixed derivative `d^alpha/dz^alpha d^beta/d(conj w)^beta (1 - z conj(w))^{-lam}`
/// in closed form (finite Leibniz expansion of the two derivative chains).
pub fn scalar_kernel_derivative<T: Scalar>(
    alpha: usize,
    beta: usize,
    lam: T,
    z: Complex<T>,
    w: Complex<T>,
) -> Complex<T> {
    let wbar = w.conj();
    let base = cone::<T>() - z * wbar;
    let mut acc = czero::<T>();
    for i in 0..=alpha.min(beta) {
        // C(beta, i) * alpha!/(alpha-i)! * (lam + alpha)_{beta - i}
        let mut coeff = T::one();
        for k in 0..i {
            coeff = coeff * ti::<T>(beta - k) / ti::<T>(k + 1);
        }
        for k in 0..i {
            coeff *= ti::<T>(alpha - k);
        }
        coeff *= pochhammer(lam + ti(alpha), beta - i);
        let mut mono = cone::<T>();
        for _ in 0..(alpha - i) {
            mono *= wbar;
        }
        for _ in 0..(beta - i) {
            mono *= z;
        }
        let exponent = -(lam + ti::<T>(alpha + beta - i));
        acc += mono * cpowf(base, exponent) * re(coeff);
    }
    acc * re(pochhammer(lam, alpha))
}

/// Kernel value at `(z, w)`: block `(l, p)` collects
///
/// ```text
/// sum_{j <= min(l,p)} c_{lj} c_{pj} d_z^{l-j} d_wbar^{p-j} (1 - z wbar)^{-2(eta+j)}
///                     Y_l..Y_{j+1} P_j Y_{j+1}^*..Y_p^*
/// ```
pub fn kernel_at<T: Scalar>(
    spec: &BundleSpec<T>,
    normalizer: &NormalizerSolution<T>,
    z: Complex<T>,
    w: Complex<T>,
) -> Result<KernelMatrix<T>> {
    require_positive_eta(spec.eta())?;
    check_in_disc(z)?;
    check_in_disc(w)?;
    let m = spec.top_grade();
    let offsets = spec.offsets();
    let mut out = DMatrix::from_element(spec.dim(), spec.dim(), czero());
    for l in 0..=m {
        for p in 0..=m {
            let dl = spec.multiplicities()[l];
            let dp = spec.multiplicities()[p];
            let mut blk: DMatrix<Complex<T>> = DMatrix::zeros(dl, dp);
            for j in 0..=l.min(p) {
                let c = gamma_coeff(spec.eta(), l, j)? * gamma_coeff(spec.eta(), p, j)?;
                let lam = (spec.eta() + ti(j)) * t(2.0);
                let deriv = scalar_kernel_derivative(l - j, p - j, lam, z, w);
                let left = spec.y_product(l, j);
                let right = spec.y_product(p, j);
                blk += (&left * normalizer.product(j) * right.adjoint()) * (deriv * re(c));
            }
            out.view_mut((offsets[l], offsets[p]), (dl, dp)).copy_from(&blk);
        }
    }
    Ok(KernelMatrix { value: out, z, w })
}

/// Max-norm of `J_g(z) K(gz, gw) J_g(w)^* - K(z, w)`.
pub fn kernel_invariance_residual<T: Scalar>(
    spec: &BundleSpec<T>,
    normalizer: &NormalizerSolution<T>,
    g: &MoebiusElement<T>,
    z: Complex<T>,
    w: Complex<T>,
) -> Result<T> {
    let gz = g.apply(z)?;
    let gw = g.apply(w)?;
    let jz = multiplier(spec, g, z)?;
    let jw = multiplier(spec, g, w)?;
    let lhs = &jz * kernel_at(spec, normalizer, gz, gw)?.value * jw.adjoint();
    let rhs = kernel_at(spec, normalizer, z, w)?.value;
    Ok(max_abs(&(lhs - rhs)))
}

/// Max-norm of `K(z, z) - J_q(z) K(0, 0) J_q(z)^*` where `q` is the disc
/// automorphism moving `z` back to the origin (the inverse of the point
/// section at `z`).  This is the diagonal transport law; it follows from the
/// invariance identity specialized to `g = q`, `w = z`.
pub fn transport_residual<T: Scalar>(
    spec: &BundleSpec<T>,
    normalizer: &NormalizerSolution<T>,
    z: Complex<T>,
) -> Result<T> {
    let q = MoebiusElement::point_section(z)?.inverse();
    let jq = multiplier(spec, &q, z)?;
    let rhs = &jq * kernel_at_origin(spec, normalizer)?.value * jq.adjoint();
    let lhs = kernel_at(spec, normalizer, z, z)?.value;
    Ok(max_abs(&(lhs - rhs)))
}

/// The pointwise Hermitian structure `K(z, z)^{-1}`; fails when the kernel
/// value is numerically singular (positivity failure upstream).
pub fn hermitian_structure_at<T: Scalar>(
    spec: &BundleSpec<T>,
    normalizer: &NormalizerSolution<T>,
    z: Complex<T>,
) -> Result<DMatrix<Complex<T>>> {
    let k = kernel_at(spec, normalizer, z, z)?.value;
    let herm = hermitize(&k);
    let eig = herm.clone().symmetric_eigen();
    let mut lo = eig.eigenvalues[0];
    let mut hi = eig.eigenvalues[0];
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo <= T::positivity_cutoff() * hi.abs().max(T::one()) {
        return Err(Error::SingularKernel {
            min_eigenvalue: as_f64(lo),
        });
    }
    let d = herm.nrows();
    let mut inv = DMatrix::from_element(d, d, czero());
    for i in 0..d {
        let col = eig.eigenvectors.column(i);
        let scale = re(T::one() / eig.eigenvalues[i]);
        // inv += v_i v_i^* / lambda_i
        for r in 0..d {
            for c in 0..d {
                inv[(r, c)] += col[r] * col[c].conj() * scale;
            }
        }
    }
    Ok(inv)
}

/// Kernel evaluator, optionally twisted by an extra scalar line-bundle
/// factor `(1 - z conj(w))^{-2 eps}`.
#[derive(Debug, Clone)]
pub struct KernelEvaluator<T: Scalar> {
    spec: BundleSpec<T>,
    normalizer: NormalizerSolution<T>,
    twist: T,
}

impl<T: Scalar> KernelEvaluator<T> {
    pub fn new(spec: BundleSpec<T>, normalizer: NormalizerSolution<T>) -> Self {
        Self {
            spec,
            normalizer,
            twist: T::zero(),
        }
    }

    /// Twist by `(1 - z conj(w))^{-2 eps}`; the value at the origin is
    /// unchanged and the result is the invariant kernel for the spec with
    /// twist `eta + eps`.
    pub fn line_bundle_twist(&self, eps: T) -> Self {
        Self {
            spec: self.spec.clone(),
            normalizer: self.normalizer.clone(),
            twist: self.twist + eps,
        }
    }

    /// The spec whose multiplier leaves this evaluator invariant.
    pub fn effective_spec(&self) -> BundleSpec<T> {
        self.spec.with_eta(self.spec.eta() + self.twist)
    }

    pub fn at(&self, z: Complex<T>, w: Complex<T>) -> Result<KernelMatrix<T>> {
        let base = kernel_at(&self.spec, &self.normalizer, z, w)?;
        if self.twist == T::zero() {
            return Ok(base);
        }
        let factor = cpowf(cone::<T>() - z * w.conj(), -(self.twist + self.twist));
        Ok(KernelMatrix {
            value: base.value * factor,
            z,
            w,
        })
    }

    /// Invariance residual of this evaluator under the multiplier of the
    /// effective (twisted) spec.
    pub fn invariance_residual(
        &self,
        g: &MoebiusElement<T>,
        z: Complex<T>,
        w: Complex<T>,
    ) -> Result<T> {
        let spec = self.effective_spec();
        let gz = g.apply(z)?;
        let gw = g.apply(w)?;
        let jz = multiplier(&spec, g, z)?;
        let jw = multiplier(&spec, g, w)?;
        let lhs = &jz * self.at(gz, gw)?.value * jw.adjoint();
        let rhs = self.at(z, w)?.value;
        Ok(max_abs(&(lhs - rhs)))
    }
}
