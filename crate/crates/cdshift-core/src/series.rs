//! Truncated power series, scalar and graded.
//!
//! Every series carries an exactness watermark: the degree up to which its
//! coefficients are those of the underlying function, assuming the
//! preconditions of the producing operation held.  Arithmetic never reads
//! coefficients above the truncation degree.  Composition-type operations
//! (`transform`) treat their input as a polynomial given completely by the
//! stored coefficients; feeding a truncated tail instead introduces an error
//! of the order of the dropped coefficients, which is the caller's budget.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moebius::MoebiusElement;
use crate::scalar::{cone, czero, re, t, ti, Scalar};
use crate::special::pochhammer;

/// Scalar truncated power series with coefficients for degrees `0..=trunc`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries<T: Scalar> {
    coeffs: Vec<Complex<T>>,
    exact: usize,
}

impl<T: Scalar> PowerSeries<T> {
    /// Zero series truncated at `trunc`.
    pub fn zero(trunc: usize) -> Self {
        Self {
            coeffs: vec![czero(); trunc + 1],
            exact: trunc,
        }
    }

    /// Polynomial from coefficients (degree = `coeffs.len() - 1`), padded
    /// with zeros up to `trunc`.
    pub fn polynomial(coeffs: &[Complex<T>], trunc: usize) -> Result<Self> {
        if coeffs.len() > trunc + 1 {
            return Err(Error::TruncationExceeded {
                requested: coeffs.len().saturating_sub(1),
                truncation: trunc,
            });
        }
        let mut c = coeffs.to_vec();
        c.resize(trunc + 1, czero());
        Ok(Self { coeffs: c, exact: trunc })
    }

    /// Monomial `coeff * z^degree`.
    pub fn monomial(coeff: Complex<T>, degree: usize, trunc: usize) -> Result<Self> {
        let mut s = Self::zero(trunc);
        if degree > trunc {
            return Err(Error::TruncationExceeded {
                requested: degree,
                truncation: trunc,
            });
        }
        s.coeffs[degree] = coeff;
        Ok(s)
    }

    pub fn trunc(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn exact_degree(&self) -> usize {
        self.exact
    }

    pub fn coeff(&self, degree: usize) -> Complex<T> {
        self.coeffs.get(degree).copied().unwrap_or_else(czero)
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    fn with_exact(mut self, exact: usize) -> Self {
        self.exact = exact.min(self.trunc());
        self
    }

    /// Termwise k-th derivative; the exactness watermark drops by `k`.
    pub fn differentiate(&self, k: usize) -> Result<Self> {
        if k > self.trunc() {
            return Err(Error::TruncationExceeded {
                requested: k,
                truncation: self.trunc(),
            });
        }
        let mut cur = self.coeffs.clone();
        for _ in 0..k {
            for n in 1..cur.len() {
                cur[n - 1] = cur[n] * re(ti::<T>(n));
            }
            cur.pop();
        }
        Ok(Self {
            coeffs: cur,
            exact: self.exact.saturating_sub(k),
        })
    }

    pub fn add(&self, other: &Self) -> Self {
        let trunc = self.trunc().min(other.trunc());
        let mut coeffs = Vec::with_capacity(trunc + 1);
        for n in 0..=trunc {
            coeffs.push(self.coeffs[n] + other.coeffs[n]);
        }
        Self {
            coeffs,
            exact: self.exact.min(other.exact).min(trunc),
        }
    }

    pub fn scale(&self, factor: Complex<T>) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|&c| c * factor).collect(),
            exact: self.exact,
        }
    }

    /// Cauchy product truncated at the shorter of the two truncations.
    pub fn mul(&self, other: &Self) -> Self {
        let trunc = self.trunc().min(other.trunc());
        let mut coeffs = vec![czero(); trunc + 1];
        for i in 0..=trunc {
            if self.coeffs[i].norm_sqr() == T::zero() {
                continue;
            }
            for j in 0..=(trunc - i) {
                coeffs[i + j] += self.coeffs[i] * other.coeffs[j];
            }
        }
        Self {
            coeffs,
            exact: self.exact.min(other.exact).min(trunc),
        }
    }

    /// Largest coefficient modulus through `degree`.
    pub fn max_coeff_through(&self, degree: usize) -> T {
        let mut best = T::zero();
        for n in 0..=degree.min(self.trunc()) {
            let m = self.coeffs[n].norm_sqr().sqrt();
            if m > best {
                best = m;
            }
        }
        best
    }

    /// Expansion of `z -> g'(z)^lambda f(g(z))` truncated at degree `n`,
    /// treating `self` as a polynomial.
    ///
    /// The coefficients are exact through `n` when the input really is the
    /// whole polynomial; the principal branch of `g'(z)^lambda` is anchored
    /// at `z = 0` and propagated through the binomial series, which matches
    /// the pointwise `derivative_power` branch whenever the denominator
    /// stays off the closed negative reals on the disc.
    pub fn transform(&self, g: &MoebiusElement<T>, lambda: T, n: usize) -> Result<Self> {
        let dp0 = g.derivative_power(czero(), lambda)?;
        let a = g.a();
        let b = g.b();
        let abar = a.conj();
        let bbar = b.conj();
        let ratio = bbar / abar;

        // (conj(b) z + conj(a))^{-1} as a geometric series.
        let mut inv_den = Vec::with_capacity(n + 1);
        let mut pw = cone::<T>() / abar;
        for _ in 0..=n {
            inv_den.push(pw);
            pw *= -ratio;
        }
        let inv_den = PowerSeries { coeffs: inv_den, exact: n };

        // w(z) = (a z + b) * inv_den
        let numer = PowerSeries::polynomial(&[b, a], n.max(1))?;
        let w = numer.mul(&inv_den);

        // f(w(z)) by Horner on the stored coefficients.
        let deg = self.trunc();
        let mut acc = PowerSeries::polynomial(&[self.coeffs[deg]], n)?;
        for d in (0..deg).rev() {
            acc = acc.mul(&w);
            acc.coeffs[0] += self.coeffs[d];
        }
        acc.exact = n;

        // g'(z)^lambda = dp0 * (1 + ratio z)^{-2 lambda} via the binomial
        // series; coefficient k is dp0 * (-1)^k (2 lambda)_k / k! * ratio^k.
        let mut dpow = Vec::with_capacity(n + 1);
        let mut term = dp0;
        let two_lambda = lambda + lambda;
        for k in 0..=n {
            dpow.push(term);
            term *= -ratio * re((two_lambda + ti(k)) / ti::<T>(k + 1));
        }
        let dpow = PowerSeries { coeffs: dpow, exact: n };

        Ok(dpow.mul(&acc).with_exact(n))
    }
}

/// Right-hand side of the derivative expansion of `(g')^l (f o g)`:
///
/// ```text
/// sum_{i=0}^{k} C(k,i) (2l+i)_{k-i} (-c_g)^{k-i} (g')^{l+(k+i)/2} (f^{(i)} o g)
/// ```
///
/// truncated at degree `n`.  Matches the k-th derivative of
/// `transform(f, g, l, .)` coefficientwise on the shared exact range.
pub fn leibnitz_rhs<T: Scalar>(
    f: &PowerSeries<T>,
    g: &MoebiusElement<T>,
    l: T,
    k: usize,
    n: usize,
) -> Result<PowerSeries<T>> {
    let c = g.c();
    let mut acc = PowerSeries::zero(n);
    let mut binom = T::one();
    for i in 0..=k {
        if i > 0 {
            binom = binom * ti::<T>(k - i + 1) / ti::<T>(i);
        }
        let poch = pochhammer(l + l + ti(i), k - i);
        let mut cpow = cone::<T>();
        for _ in 0..(k - i) {
            cpow *= -c;
        }
        let exponent = l + (ti::<T>(k) + ti::<T>(i)) / t(2.0);
        let transformed = f.differentiate(i)?.transform(g, exponent, n)?;
        acc = acc.add(&transformed.scale(cpow * re(binom * poch)));
    }
    Ok(acc)
}

/// Vector-valued truncated power series with coefficients graded into
/// components of sizes `d_0..d_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedSeries<T: Scalar> {
    multiplicities: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
    coeffs: Vec<DVector<Complex<T>>>,
    exact: usize,
}

impl<T: Scalar> GradedSeries<T> {
    /// Zero graded series.
    pub fn zero(multiplicities: &[usize], trunc: usize) -> Self {
        let mut offsets = Vec::with_capacity(multiplicities.len());
        let mut dim = 0;
        for &d in multiplicities {
            offsets.push(dim);
            dim += d;
        }
        Self {
            multiplicities: multiplicities.to_vec(),
            offsets,
            dim,
            coeffs: vec![DVector::from_element(dim, czero()); trunc + 1],
            exact: trunc,
        }
    }

    /// Series supported on a single grade, built from per-entry scalar series.
    pub fn from_grade(
        multiplicities: &[usize],
        grade: usize,
        entries: &[PowerSeries<T>],
        trunc: usize,
    ) -> Result<Self> {
        if grade >= multiplicities.len() || entries.len() != multiplicities[grade] {
            return Err(Error::ShapeMismatch(format!(
                "grade {grade} expects {} entries",
                multiplicities.get(grade).copied().unwrap_or(0)
            )));
        }
        let mut s = Self::zero(multiplicities, trunc);
        for (q, e) in entries.iter().enumerate() {
            for n in 0..=trunc.min(e.trunc()) {
                s.coeffs[n][s.offsets[grade] + q] = e.coeff(n);
            }
            s.exact = s.exact.min(e.exact_degree());
        }
        Ok(s)
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn grades(&self) -> usize {
        self.multiplicities.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trunc(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn exact_degree(&self) -> usize {
        self.exact
    }

    pub fn coeff(&self, degree: usize) -> &DVector<Complex<T>> {
        &self.coeffs[degree]
    }

    /// One scalar entry as a standalone series.
    pub fn entry_series(&self, grade: usize, q: usize) -> PowerSeries<T> {
        let idx = self.offsets[grade] + q;
        PowerSeries {
            coeffs: self.coeffs.iter().map(|c| c[idx]).collect(),
            exact: self.exact,
        }
    }

    /// Coefficient vectors of one grade, per degree.
    pub fn grade_coeffs(&self, grade: usize) -> Vec<DVector<Complex<T>>> {
        let off = self.offsets[grade];
        let d = self.multiplicities[grade];
        self.coeffs.iter().map(|c| c.rows(off, d).into_owned()).collect()
    }

    /// Overwrite one grade from per-degree coefficient vectors.
    pub fn set_grade_coeffs(&mut self, grade: usize, coeffs: &[DVector<Complex<T>>]) {
        let off = self.offsets[grade];
        let d = self.multiplicities[grade];
        for (n, v) in coeffs.iter().enumerate().take(self.coeffs.len()) {
            self.coeffs[n].rows_mut(off, d).copy_from(v);
        }
    }

    pub fn lower_exact(&mut self, exact: usize) {
        self.exact = self.exact.min(exact);
    }

    /// Termwise k-th derivative of every entry.
    pub fn differentiate(&self, k: usize) -> Result<Self> {
        if k > self.trunc() {
            return Err(Error::TruncationExceeded {
                requested: k,
                truncation: self.trunc(),
            });
        }
        let mut cur = self.coeffs.clone();
        for _ in 0..k {
            for n in 1..cur.len() {
                cur[n - 1] = &cur[n] * re(ti::<T>(n));
            }
            cur.pop();
        }
        Ok(Self {
            multiplicities: self.multiplicities.clone(),
            offsets: self.offsets.clone(),
            dim: self.dim,
            coeffs: cur,
            exact: self.exact.saturating_sub(k),
        })
    }

    /// Entrywise `g'(z)^lambda f(g(z))` truncated at `n`.
    pub fn transform(&self, g: &MoebiusElement<T>, lambda: T, n: usize) -> Result<Self> {
        let mut out = Self::zero(&self.multiplicities, n);
        for grade in 0..self.grades() {
            for q in 0..self.multiplicities[grade] {
                let e = self.entry_series(grade, q).transform(g, lambda, n)?;
                let idx = out.offsets[grade] + q;
                for d in 0..=n {
                    out.coeffs[d][idx] = e.coeff(d);
                }
                out.exact = out.exact.min(e.exact_degree());
            }
        }
        Ok(out)
    }

    /// Apply a constant square matrix to every coefficient vector.
    pub fn apply_matrix(&self, m: &DMatrix<Complex<T>>) -> Result<Self> {
        if m.ncols() != self.dim || m.nrows() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "matrix is {}x{}, series dimension is {}",
                m.nrows(),
                m.ncols(),
                self.dim
            )));
        }
        Ok(Self {
            multiplicities: self.multiplicities.clone(),
            offsets: self.offsets.clone(),
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|c| m * c).collect(),
            exact: self.exact,
        })
    }

    /// Largest entry modulus across coefficients of degree `<= degree`.
    pub fn max_coeff_through(&self, degree: usize) -> T {
        let mut best = T::zero();
        for n in 0..=degree.min(self.trunc()) {
            for v in self.coeffs[n].iter() {
                let m = v.norm_sqr().sqrt();
                if m > best {
                    best = m;
                }
            }
        }
        best
    }

    /// Largest coefficientwise difference through degree `degree`.
    pub fn max_diff_through(&self, other: &Self, degree: usize) -> T {
        let mut best = T::zero();
        let top = degree.min(self.trunc()).min(other.trunc());
        for n in 0..=top {
            let d = &self.coeffs[n] - &other.coeffs[n];
            for v in d.iter() {
                let m = v.norm_sqr().sqrt();
                if m > best {
                    best = m;
                }
            }
        }
        best
    }
}

/// Evaluate a scalar series at a point (spot checks, not identities).
pub fn evaluate<T: Scalar>(s: &PowerSeries<T>, z: Complex<T>) -> Complex<T> {
    let mut acc = czero();
    for &c in s.coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}
