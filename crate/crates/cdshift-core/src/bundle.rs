//! Bundle data `(eta, Y)`, the multiplier cocycle in two closed forms,
//! commutant and decomposition computations, and canonical forms for the
//! scalar-chain and `(1,2,1)` families.
//!
//! The data is a real twist `eta` together with blocks `Y_1, ..., Y_m`,
//! where `Y_j` maps the grade-`(j-1)` multiplicity space into the grade-`j`
//! one.  The multiplier of a disc automorphism `g` at `z` is block lower
//! triangular in the grading:
//!
//! ```text
//! J_g(z)_{p,l} = (-c_g)^{p-l} / (p-l)! * g'(z)^{eta+(p+l)/2} * Y_p ... Y_{l+1}
//! ```
//!
//! for `p >= l` and zero otherwise, with `c_g` the lower-left entry of `g`.
//! The same matrix also factors as `g'(z)^eta D exp(-c_g Y) D` with `D`
//! diagonal per grade; both paths are implemented and tested against each
//! other.  The `D` exponent is `(conj(b) z + conj(a))^{-j}` on grade `j`,
//! the convention under which the two paths agree.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::moebius::{check_in_disc, MoebiusElement};
use crate::scalar::{cabs, cone, czero, re, t, ti, Scalar};

/// The pair `(eta, Y)`: twist parameter plus graded subdiagonal blocks.
///
/// `eta` may be any real for the pure multiplier identities; kernel and
/// shift computations require `eta > 0` and validate it themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleSpec<T: Scalar> {
    eta: T,
    multiplicities: Vec<usize>,
    blocks: Vec<DMatrix<Complex<T>>>,
}

impl<T: Scalar> BundleSpec<T> {
    /// Validate shapes: `multiplicities = [d_0, ..., d_m]` all positive and
    /// block `j` (mapping grade `j-1` to grade `j`) of shape `d_j x d_{j-1}`.
    pub fn new(
        eta: T,
        multiplicities: Vec<usize>,
        blocks: Vec<DMatrix<Complex<T>>>,
    ) -> Result<Self> {
        if multiplicities.is_empty() {
            return Err(Error::ShapeMismatch(
                "at least one multiplicity is required".into(),
            ));
        }
        if multiplicities.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(
                "multiplicities must be positive".into(),
            ));
        }
        if blocks.len() + 1 != multiplicities.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} multiplicities require {} blocks, got {}",
                multiplicities.len(),
                multiplicities.len() - 1,
                blocks.len()
            )));
        }
        for (j, y) in blocks.iter().enumerate() {
            let rows = multiplicities[j + 1];
            let cols = multiplicities[j];
            if y.nrows() != rows || y.ncols() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "block {} must be {}x{}, got {}x{}",
                    j + 1,
                    rows,
                    cols,
                    y.nrows(),
                    y.ncols()
                )));
            }
        }
        Ok(Self {
            eta,
            multiplicities,
            blocks,
        })
    }

    /// Scalar chain: all multiplicities one, blocks given by scalars.
    pub fn scalar_chain(eta: T, ys: &[Complex<T>]) -> Self {
        let blocks = ys
            .iter()
            .map(|&y| DMatrix::from_element(1, 1, y))
            .collect();
        Self::new(eta, vec![1; ys.len() + 1], blocks).expect("scalar chain shapes")
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    /// Number of subdiagonal blocks `m` (the top grade).
    pub fn top_grade(&self) -> usize {
        self.blocks.len()
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// Total dimension `d = d_0 + ... + d_m`.
    pub fn dim(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Starting index of each grade in the flattened coordinate layout.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.multiplicities.len());
        let mut acc = 0;
        for &d in &self.multiplicities {
            offsets.push(acc);
            acc += d;
        }
        offsets
    }

    /// Block `Y_j` for `1 <= j <= m`.
    pub fn y(&self, j: usize) -> &DMatrix<Complex<T>> {
        &self.blocks[j - 1]
    }

    pub fn blocks(&self) -> &[DMatrix<Complex<T>>] {
        &self.blocks
    }

    /// The product `Y_p Y_{p-1} ... Y_{j+1}` mapping grade `j` to grade `p`;
    /// the identity when `p == j`.
    pub fn y_product(&self, p: usize, j: usize) -> DMatrix<Complex<T>> {
        assert!(p >= j && p <= self.top_grade());
        let mut acc = DMatrix::identity(self.multiplicities[j], self.multiplicities[j]);
        for k in (j + 1)..=p {
            acc = self.y(k) * acc;
        }
        acc
    }

    /// Same data with a different twist.
    pub fn with_eta(&self, eta: T) -> Self {
        Self {
            eta,
            multiplicities: self.multiplicities.clone(),
            blocks: self.blocks.clone(),
        }
    }

    /// Conjugate the blocks by a block-diagonal unitary:
    /// `Y_j -> U_j Y_j U_{j-1}^*`.
    pub fn conjugate_unitary(&self, u: &BlockDiagonal<T>) -> Result<Self> {
        u.check_shape(&self.multiplicities)?;
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, y)| u.block(i + 1) * y * u.block(i).adjoint())
            .collect();
        Self::new(self.eta, self.multiplicities.clone(), blocks)
    }
}

/// Block-diagonal matrix matching a spec's multiplicity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonal<T: Scalar> {
    blocks: Vec<DMatrix<Complex<T>>>,
}

impl<T: Scalar> BlockDiagonal<T> {
    pub fn new(blocks: Vec<DMatrix<Complex<T>>>) -> Result<Self> {
        for (j, b) in blocks.iter().enumerate() {
            if b.nrows() != b.ncols() {
                return Err(Error::ShapeMismatch(format!(
                    "diagonal block {j} must be square, got {}x{}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self { blocks })
    }

    pub fn identity(multiplicities: &[usize]) -> Self {
        Self {
            blocks: multiplicities
                .iter()
                .map(|&d| DMatrix::identity(d, d))
                .collect(),
        }
    }

    pub fn check_shape(&self, multiplicities: &[usize]) -> Result<()> {
        if self.blocks.len() != multiplicities.len()
            || self
                .blocks
                .iter()
                .zip(multiplicities)
                .any(|(b, &d)| b.nrows() != d)
        {
            return Err(Error::ShapeMismatch(
                "block-diagonal shape does not match the multiplicity pattern".into(),
            ));
        }
        Ok(())
    }

    pub fn grades(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, j: usize) -> &DMatrix<Complex<T>> {
        &self.blocks[j]
    }

    pub fn blocks(&self) -> &[DMatrix<Complex<T>>] {
        &self.blocks
    }

    /// Assemble the full square matrix.
    pub fn to_full(&self) -> DMatrix<Complex<T>> {
        let dim: usize = self.blocks.iter().map(|b| b.nrows()).sum();
        let mut full = DMatrix::from_element(dim, dim, czero());
        let mut off = 0;
        for b in &self.blocks {
            full.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
            off += b.nrows();
        }
        full
    }

    pub fn adjoint(&self) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }
}

/// Largest entry modulus of a matrix.
pub fn max_abs<T: Scalar>(m: &DMatrix<Complex<T>>) -> T {
    let mut best = T::zero();
    for v in m.iter() {
        let a = cabs(*v);
        if a > best {
            best = a;
        }
    }
    best
}

/// The multiplier `J_g(z)` assembled blockwise from the closed form.
pub fn multiplier<T: Scalar>(
    spec: &BundleSpec<T>,
    g: &MoebiusElement<T>,
    z: Complex<T>,
) -> Result<DMatrix<Complex<T>>> {
    check_in_disc(z)?;
    let m = spec.top_grade();
    let dim = spec.dim();
    let offsets = spec.offsets();
    let c = g.c();
    let mut out = DMatrix::from_element(dim, dim, czero());
    for p in 0..=m {
        for l in 0..=p {
            // (-c)^{p-l} / (p-l)!
            let mut coeff = cone::<T>();
            for k in 0..(p - l) {
                coeff *= -c / re(ti::<T>(k + 1));
            }
            let lambda = spec.eta + ti::<T>(p + l) / t(2.0);
            let coeff = coeff * g.derivative_power(z, lambda)?;
            let block = spec.y_product(p, l) * coeff;
            out.view_mut(
                (offsets[p], offsets[l]),
                (spec.multiplicities[p], spec.multiplicities[l]),
            )
            .copy_from(&block);
        }
    }
    Ok(out)
}

/// The full strictly block-lower-triangular matrix assembled from the blocks.
pub fn full_y<T: Scalar>(spec: &BundleSpec<T>) -> DMatrix<Complex<T>> {
    let dim = spec.dim();
    let offsets = spec.offsets();
    let mut y = DMatrix::from_element(dim, dim, czero());
    for j in 1..=spec.top_grade() {
        y.view_mut(
            (offsets[j], offsets[j - 1]),
            (spec.multiplicities[j], spec.multiplicities[j - 1]),
        )
        .copy_from(spec.y(j));
    }
    y
}

/// The multiplier through the factored form
/// `g'(z)^eta * D * exp(-c_g Y) * D` with `D = diag((conj(b) z + conj(a))^{-j})`
/// per grade; the exponential of the nilpotent `Y` is the finite sum.
pub fn multiplier_exp_form<T: Scalar>(
    spec: &BundleSpec<T>,
    g: &MoebiusElement<T>,
    z: Complex<T>,
) -> Result<DMatrix<Complex<T>>> {
    check_in_disc(z)?;
    let m = spec.top_grade();
    let dim = spec.dim();
    let u = g.denominator(z);

    // exp(-c Y): nilpotency order m+1.
    let y = full_y(spec);
    let mut expm: DMatrix<Complex<T>> = DMatrix::identity(dim, dim);
    let mut term: DMatrix<Complex<T>> = DMatrix::identity(dim, dim);
    let c = g.c();
    for k in 1..=m {
        term = (&y * term) * (-c / re(ti::<T>(k)));
        expm += &term;
    }

    // D with (conj(b) z + conj(a))^{-j} on grade j.
    let offsets = spec.offsets();
    let mut dvec = vec![czero::<T>(); dim];
    for (j, &d) in spec.multiplicities.iter().enumerate() {
        let mut p = cone::<T>();
        for _ in 0..j {
            p /= u;
        }
        for q in 0..d {
            dvec[offsets[j] + q] = p;
        }
    }
    let dmat = DMatrix::from_fn(dim, dim, |r, cidx| {
        if r == cidx {
            dvec[r]
        } else {
            czero()
        }
    });

    let front = g.derivative_power(z, spec.eta)?;
    Ok((&dmat * expm * &dmat) * front)
}

/// Max-norm of `J_{hg}(z) - J_g(z) J_h(g z)`; a small value certifies the
/// cocycle law at the sample.
pub fn cocycle_residual<T: Scalar>(
    spec: &BundleSpec<T>,
    g: &MoebiusElement<T>,
    h: &MoebiusElement<T>,
    z: Complex<T>,
) -> Result<T> {
    let gz = g.apply(z)?;
    let lhs = multiplier(spec, &h.compose(g), z)?;
    let rhs = multiplier(spec, g, z)? * multiplier(spec, h, gz)?;
    Ok(max_abs(&(lhs - rhs)))
}

// ---------------------------------------------------------------------------
// Commutant and decomposition
// ---------------------------------------------------------------------------

/// Real dimension of the Hermitian matrices of size `d`.
fn herm_dim(d: usize) -> usize {
    d * d
}

/// Write a Hermitian matrix from its real coordinate vector: diagonal
/// entries first, then (re, im) pairs for the upper triangle, row by row.
fn herm_from_coords<T: Scalar>(d: usize, coords: &[T]) -> DMatrix<Complex<T>> {
    let mut m = DMatrix::from_element(d, d, czero());
    let mut idx = 0;
    for i in 0..d {
        m[(i, i)] = re(coords[idx]);
        idx += 1;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let v = Complex::new(coords[idx], coords[idx + 1]);
            idx += 2;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    m
}

/// Basis coordinate vectors for the Hermitian matrices of size `d`.
fn herm_basis_coords<T: Scalar>(d: usize) -> Vec<Vec<T>> {
    let n = herm_dim(d);
    (0..n)
        .map(|k| {
            let mut v = vec![T::zero(); n];
            v[k] = T::one();
            v
        })
        .collect()
}

/// A real-linear basis of the Hermitian block-diagonal solutions of
/// `A_j Y_j = Y_j A_{j-1}` for all `j`, computed as the nullspace of the
/// stacked real linear system.  The span always contains the identity.
///
/// Dimension one means the bundle is irreducible.
pub fn commutant_basis<T: Scalar>(spec: &BundleSpec<T>) -> Vec<BlockDiagonal<T>> {
    let mult = spec.multiplicities();
    let grades = mult.len();
    let total_unknowns: usize = mult.iter().map(|&d| herm_dim(d)).sum();
    let total_equations: usize = (1..grades).map(|j| 2 * mult[j] * mult[j - 1]).sum();

    // Columns: coordinates of (A_0, ..., A_m); rows: real and imaginary
    // parts of every entry of A_j Y_j - Y_j A_{j-1}.
    let mut column = 0usize;
    let mut system: DMatrix<T> = DMatrix::zeros(total_equations.max(1), total_unknowns);
    for grade in 0..grades {
        let d = mult[grade];
        for coords in herm_basis_coords::<T>(d) {
            let a = herm_from_coords(d, &coords);
            let mut row = 0usize;
            for j in 1..grades {
                let rows = mult[j];
                let cols = mult[j - 1];
                let mut val: DMatrix<Complex<T>> = DMatrix::from_element(rows, cols, czero());
                if grade == j {
                    val += &a * spec.y(j);
                }
                if grade == j - 1 {
                    val -= spec.y(j) * &a;
                }
                for r in 0..rows {
                    for cidx in 0..cols {
                        system[(row, column)] = val[(r, cidx)].re;
                        system[(row + 1, column)] = val[(r, cidx)].im;
                        row += 2;
                    }
                }
            }
            column += 1;
        }
    }

    if total_equations == 0 {
        // No constraints: every Hermitian block-diagonal matrix commutes.
        return herm_basis_coords::<T>(mult[0])
            .into_iter()
            .map(|coords| {
                BlockDiagonal::new(vec![herm_from_coords(mult[0], &coords)]).expect("square")
            })
            .collect();
    }

    let svd = system.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &b| a.max(b));
    let cutoff = t::<T>(1e-9) * smax.max(T::one());
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > cutoff)
        .count();

    let mut basis = Vec::new();
    for r in rank..v_t.nrows() {
        let coords: Vec<T> = v_t.row(r).iter().copied().collect();
        let mut blocks = Vec::with_capacity(grades);
        let mut off = 0;
        for &d in mult {
            blocks.push(herm_from_coords(d, &coords[off..off + herm_dim(d)]));
            off += herm_dim(d);
        }
        basis.push(BlockDiagonal::new(blocks).expect("square blocks"));
    }
    basis
}

/// One orthogonal constituent of a decomposed spec.
#[derive(Debug, Clone)]
pub struct Component<T: Scalar> {
    /// First grade of the parent the component occupies; its spec carries
    /// the shifted twist `eta + offset`.
    pub offset: usize,
    /// The component as a standalone elementary spec.
    pub spec: BundleSpec<T>,
    /// Per parent grade `offset + k`: an isometry whose columns map the
    /// component's grade-`k` space into the parent grade.
    pub basis: Vec<DMatrix<Complex<T>>>,
    /// Orthogonal projection onto the component, block per parent grade.
    pub projection: BlockDiagonal<T>,
}

/// Split a spec into irreducible orthogonal constituents.
///
/// Returns the single trivial component when the commutant has dimension
/// one.  Otherwise spectral projections of a non-scalar Hermitian commutant
/// element produce sub-bundles; contiguous grade runs are split off,
/// re-expressed in the eigenbasis and decomposed recursively.  The direct
/// sum of the returned sub-specs reassembles the input up to the returned
/// block-diagonal isometries.
pub fn decompose<T: Scalar>(spec: &BundleSpec<T>) -> Vec<Component<T>> {
    let mult = spec.multiplicities().to_vec();
    let trivial = || {
        vec![Component {
            offset: 0,
            spec: spec.clone(),
            basis: mult
                .iter()
                .map(|&d| DMatrix::identity(d, d))
                .collect::<Vec<_>>(),
            projection: BlockDiagonal::identity(&mult),
        }]
    };

    let basis = commutant_basis(spec);
    if basis.len() <= 1 {
        return trivial();
    }

    // A deterministic pseudo-random combination separates all constituents
    // at once with overwhelming likelihood; the recursion below repairs any
    // accidental eigenvalue collision.
    let mut weight = t::<T>(0.6180339887498949);
    let mut combo: Vec<DMatrix<Complex<T>>> = mult
        .iter()
        .map(|&d| DMatrix::from_element(d, d, czero()))
        .collect();
    for b in &basis {
        for (grade, blk) in b.blocks().iter().enumerate() {
            combo[grade] += blk * re(weight);
        }
        weight = (weight + t(0.7548776662466927)).fract();
    }

    // Blockwise Hermitian eigendecompositions.
    let mut eigvals: Vec<Vec<T>> = Vec::with_capacity(mult.len());
    let mut eigvecs: Vec<DMatrix<Complex<T>>> = Vec::with_capacity(mult.len());
    let mut scale = T::zero();
    for blk in &combo {
        let sym = (blk.clone() + blk.adjoint()) * re(t::<T>(0.5));
        let eig = sym.symmetric_eigen();
        for &v in eig.eigenvalues.iter() {
            scale = scale.max(v.abs());
        }
        eigvals.push(eig.eigenvalues.iter().copied().collect());
        eigvecs.push(eig.eigenvectors);
    }

    // Cluster the eigenvalues globally.
    let mut all: Vec<T> = eigvals.iter().flatten().copied().collect();
    all.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let gap = t::<T>(1e-6) * scale.max(T::one());
    let mut cluster_reps: Vec<T> = Vec::new();
    for &v in &all {
        if cluster_reps.last().map_or(true, |&r| v - r > gap) {
            cluster_reps.push(v);
        }
    }
    if cluster_reps.len() <= 1 {
        // The combination failed to separate anything; treat as irreducible.
        return trivial();
    }

    let mut out = Vec::new();
    for &rep in &cluster_reps {
        // Columns of the eigenbasis per grade lying in this cluster.
        let cols: Vec<Vec<usize>> = eigvals
            .iter()
            .map(|vals| {
                vals.iter()
                    .enumerate()
                    .filter(|(_, &v)| (v - rep).abs() <= gap)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();

        // Contiguous runs of grades with nonzero cluster dimension.
        let mut grade = 0;
        while grade < mult.len() {
            if cols[grade].is_empty() {
                grade += 1;
                continue;
            }
            let start = grade;
            while grade < mult.len() && !cols[grade].is_empty() {
                grade += 1;
            }
            let run = start..grade;

            // Isometries per grade of the run.
            let bases: Vec<DMatrix<Complex<T>>> = run
                .clone()
                .map(|gr| {
                    let idx = &cols[gr];
                    let mut v = DMatrix::from_element(mult[gr], idx.len(), czero());
                    for (kk, &i) in idx.iter().enumerate() {
                        v.column_mut(kk).copy_from(&eigvecs[gr].column(i));
                    }
                    v
                })
                .collect();

            // Restricted blocks in the eigenbasis.
            let sub_mult: Vec<usize> = bases.iter().map(|b| b.ncols()).collect();
            let sub_blocks: Vec<DMatrix<Complex<T>>> = (1..bases.len())
                .map(|k| {
                    bases[k].adjoint() * spec.y(start + k) * &bases[k - 1]
                })
                .collect();
            let sub_eta = spec.eta + ti::<T>(start);
            let sub_spec = BundleSpec::new(sub_eta, sub_mult, sub_blocks)
                .expect("restricted shapes are consistent");

            // Recurse; map child bases back through this run's bases.
            for child in decompose(&sub_spec) {
                let offset = start + child.offset;
                let child_grades = child.spec.multiplicities().len();
                let mapped: Vec<DMatrix<Complex<T>>> = (0..child_grades)
                    .map(|k| &bases[child.offset + k] * &child.basis[k])
                    .collect();
                let mut proj_blocks: Vec<DMatrix<Complex<T>>> = mult
                    .iter()
                    .map(|&d| DMatrix::from_element(d, d, czero()))
                    .collect();
                for (k, b) in mapped.iter().enumerate() {
                    proj_blocks[offset + k] = b * b.adjoint();
                }
                out.push(Component {
                    offset,
                    spec: child.spec,
                    basis: mapped,
                    projection: BlockDiagonal::new(proj_blocks).expect("square blocks"),
                });
            }
        }
    }
    out.sort_by_key(|c| c.offset);
    out
}

/// Canonical representative of a scalar chain under diagonal unitary
/// conjugation: every `y_j` replaced by its modulus.  Idempotent.
pub fn canonical_scalar_chain<T: Scalar>(spec: &BundleSpec<T>) -> Result<BundleSpec<T>> {
    if spec.multiplicities().iter().any(|&d| d != 1) {
        return Err(Error::MultiplicityPattern(
            "canonical scalar chain requires all multiplicities equal to one".into(),
        ));
    }
    let blocks = spec
        .blocks()
        .iter()
        .map(|y| DMatrix::from_element(1, 1, re(cabs(y[(0, 0)]))))
        .collect();
    BundleSpec::new(spec.eta, spec.multiplicities().to_vec(), blocks)
}

/// Canonical parameters `(a, b, c)` of a `(1,2,1)` spec: `a = |Y_1|`,
/// `b` the modulus of the `Y_2` component along `Y_1`'s direction and `c`
/// the orthogonal component modulus.  When `a = 0` the middle frame is
/// rotated so that `Y_2`'s first canonical component is `|Y_2|`, making the
/// form deterministic.  Constant on unitary conjugacy classes.
pub fn canonical_121<T: Scalar>(spec: &BundleSpec<T>) -> Result<(T, T, T)> {
    if spec.multiplicities() != [1, 2, 1] {
        return Err(Error::MultiplicityPattern(format!(
            "canonical (1,2,1) requires multiplicities [1, 2, 1], got {:?}",
            spec.multiplicities()
        )));
    }
    let y1 = spec.y(1); // 2 x 1
    let y2 = spec.y(2); // 1 x 2
    let a2 = y1[(0, 0)].norm_sqr() + y1[(1, 0)].norm_sqr();
    let a = a2.sqrt();
    let y2_norm2 = y2[(0, 0)].norm_sqr() + y2[(0, 1)].norm_sqr();
    if a <= T::identity_slack() {
        return Ok((T::zero(), y2_norm2.sqrt(), T::zero()));
    }
    // b = |Y_2 Y_1| / a, c = sqrt(|Y_2|^2 - b^2).
    let pairing = y2[(0, 0)] * y1[(0, 0)] + y2[(0, 1)] * y1[(1, 0)];
    let b = cabs(pairing) / a;
    let c2 = (y2_norm2 - b * b).max(T::zero());
    Ok((a, b, c2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;
    use crate::Moebius64;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn spec_11(eta: f64, y: Complex<f64>) -> BundleSpec<f64> {
        BundleSpec::scalar_chain(eta, &[y])
    }

    fn spec_121(eta: f64, a: f64, b: f64, c: f64) -> BundleSpec<f64> {
        BundleSpec::new(
            eta,
            vec![1, 2, 1],
            vec![
                DMatrix::from_row_slice(2, 1, &[cx(a, 0.0), cx(0.0, 0.0)]),
                DMatrix::from_row_slice(1, 2, &[cx(b, 0.0), cx(c, 0.0)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn shapes_are_validated() {
        assert!(BundleSpec::new(1.0, vec![1, 2], vec![DMatrix::<Complex<f64>>::zeros(1, 1)]).is_err());
        assert!(BundleSpec::new(1.0, vec![1, 0], vec![DMatrix::zeros(0, 1)]).is_err());
        assert!(BundleSpec::new(1.0, vec![1, 2], vec![DMatrix::zeros(2, 1)]).is_ok());
    }

    #[test]
    fn multiplier_at_identity_is_identity() {
        let spec = spec_121(0.7, 1.0, 2.0, 0.5);
        let j = multiplier(&spec, &Moebius64::identity(), cx(0.3, 0.1)).unwrap();
        assert!(max_abs(&(j - DMatrix::identity(4, 4))) < 1e-14);
    }

    #[test]
    fn multiplier_rotation_is_diagonal() {
        // c = 0 and g' = e^{i theta}: grade j gets e^{i theta (eta + j)}.
        let eta = 0.8f64;
        let theta = 0.45f64;
        let spec = BundleSpec::new(
            eta,
            vec![2, 1],
            vec![DMatrix::from_row_slice(1, 2, &[cx(1.0, 0.0), cx(0.5, -0.3)])],
        )
        .unwrap();
        let j = multiplier(&spec, &Moebius64::rotation(theta), cx(0.2, -0.2)).unwrap();
        let e0 = cx((eta * theta).cos(), (eta * theta).sin());
        let e1 = cx(((eta + 1.0) * theta).cos(), ((eta + 1.0) * theta).sin());
        let mut expected = DMatrix::from_element(3, 3, cx(0.0, 0.0));
        expected[(0, 0)] = e0;
        expected[(1, 1)] = e0;
        expected[(2, 2)] = e1;
        assert!(max_abs(&(j - expected)) < 1e-14);
    }

    #[test]
    fn exp_form_nilpotent_structure_m1() {
        // exp(-c Y) for a single block: [[I, 0], [-c Y_1, I]].
        let spec = BundleSpec::new(
            1.0,
            vec![2, 2],
            vec![DMatrix::from_row_slice(
                2,
                2,
                &[cx(1.0, 0.0), cx(0.0, 2.0), cx(-0.5, 0.0), cx(0.0, 0.0)],
            )],
        )
        .unwrap();
        let g = Moebius64::point_section(cx(0.2, 0.1)).unwrap();
        let c = g.c();
        let y = full_y(&spec);
        let mut expected: DMatrix<Complex<f64>> = DMatrix::identity(4, 4);
        expected += y * -c;
        // Reconstruct exp(-cY) from the two forms: J_exp = g'^eta D E D,
        // so E = D^{-1} (J / g'^eta) D^{-1}.
        let z = cx(0.15, -0.05);
        let j = multiplier_exp_form(&spec, &g, z).unwrap();
        let u = g.denominator(z);
        let front = g.derivative_power(z, 1.0).unwrap();
        let mut dinv: DMatrix<Complex<f64>> = DMatrix::identity(4, 4);
        for q in 2..4 {
            dinv[(q, q)] = u;
        }
        let e = &dinv * (j / front) * &dinv;
        assert!(max_abs(&(e - expected)) < 1e-13);
    }

    #[test]
    fn two_paths_agree() {
        let specs = [
            spec_11(0.9, cx(1.0, -0.5)),
            spec_121(0.4, 1.0, 0.7, 0.2),
            BundleSpec::new(
                2.75,
                vec![2, 3, 1],
                vec![
                    DMatrix::from_fn(3, 2, |r, c| cx(0.3 * (r as f64) - 0.2, 0.1 * (c as f64))),
                    DMatrix::from_fn(1, 3, |_, c| cx(0.5, -0.3 * (c as f64))),
                ],
            )
            .unwrap(),
        ];
        let gs = [
            Moebius64::point_section(cx(0.2, 0.1)).unwrap(),
            Moebius64::rotation(0.3).compose(&Moebius64::point_section(cx(-0.1, 0.15)).unwrap()),
        ];
        for spec in &specs {
            for g in &gs {
                for &z in &[cx(0.3, -0.2), cx(0.0, 0.0), cx(-0.4, 0.25)] {
                    let j1 = multiplier(spec, g, z).unwrap();
                    let j2 = multiplier_exp_form(spec, g, z).unwrap();
                    assert!(max_abs(&(j1 - j2)) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn cocycle_residual_identity_cases() {
        let spec = spec_121(1.3, 0.8, 0.6, 0.4);
        let h = Moebius64::point_section(cx(0.2, -0.1)).unwrap();
        let z = cx(0.25, 0.3);
        let r = cocycle_residual(&spec, &Moebius64::identity(), &h, z).unwrap();
        assert!(r < 1e-13, "{r}");
        // g followed by g^{-1}
        let g = Moebius64::point_section(cx(0.15, 0.12)).unwrap();
        let r = cocycle_residual(&spec, &g, &g.inverse(), z).unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn cocycle_residual_random_near_identity() {
        let spec = BundleSpec::new(
            0.3,
            vec![1, 2, 2],
            vec![
                DMatrix::from_row_slice(2, 1, &[cx(0.9, 0.1), cx(-0.4, 0.7)]),
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[cx(0.5, 0.0), cx(0.1, -0.6), cx(0.0, 0.8), cx(-0.3, 0.2)],
                ),
            ],
        )
        .unwrap();
        for k in 0..24 {
            let s = (k as f64) / 24.0;
            let g = Moebius64::rotation(0.2 * s)
                .compose(&Moebius64::point_section(cx(0.2 * s, -0.15 * s)).unwrap());
            let h = Moebius64::point_section(cx(-0.1 * s, 0.25 * s)).unwrap()
                .compose(&Moebius64::rotation(-0.3 * s));
            let z = cx(0.4 * (1.3 * s).cos(), 0.4 * (1.3 * s).sin());
            let r = cocycle_residual(&spec, &g, &h, z).unwrap();
            assert!(r <= 1e-9, "sample {k}: residual {r}");
        }
    }

    #[test]
    fn conjugation_covariance() {
        // For block-diagonal unitary U: J'(g, z) = U J(g, z) U^*.
        let spec = spec_121(0.9, 1.0, 0.5, 0.25);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        let u = BlockDiagonal::new(vec![
            DMatrix::from_element(1, 1, cx(0.6, 0.8)),
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    cx(inv_sqrt2, 0.0),
                    cx(0.0, inv_sqrt2),
                    cx(0.0, inv_sqrt2),
                    cx(inv_sqrt2, 0.0),
                ],
            ),
            DMatrix::from_element(1, 1, cx(0.0, -1.0)),
        ])
        .unwrap();
        let conj = spec.conjugate_unitary(&u).unwrap();
        let g = Moebius64::point_section(cx(0.2, 0.2)).unwrap();
        let z = cx(-0.3, 0.1);
        let lhs = multiplier(&conj, &g, z).unwrap();
        let uf = u.to_full();
        let rhs = &uf * multiplier(&spec, &g, z).unwrap() * uf.adjoint();
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn commutant_dimension_examples() {
        // d = (1,1), y = 1: only scalars.
        assert_eq!(commutant_basis(&spec_11(1.0, cx(1.0, 0.0))).len(), 1);
        // d = (1,1), y = 0: the constraint is vacuous.
        assert_eq!(commutant_basis(&spec_11(1.0, cx(0.0, 0.0))).len(), 2);
        // (1,2,1) with a, b, c nonzero: irreducible.
        assert_eq!(commutant_basis(&spec_121(1.0, 1.0, 0.7, 0.4)).len(), 1);
        // c = 0 disconnects one middle direction.
        assert!(commutant_basis(&spec_121(1.0, 1.0, 0.7, 0.0)).len() > 1);
    }

    #[test]
    fn commutant_span_contains_identity() {
        let spec = spec_121(1.0, 0.9, 0.3, 0.2);
        let basis = commutant_basis(&spec);
        // Project the identity onto the span of the (coordinate-orthonormal)
        // basis and compare.
        let mult = spec.multiplicities();
        let flatten = |b: &BlockDiagonal<f64>| {
            let mut v: Vec<f64> = Vec::new();
            for blk in b.blocks() {
                let d = blk.nrows();
                for i in 0..d {
                    v.push(blk[(i, i)].re);
                }
                for i in 0..d {
                    for j in (i + 1)..d {
                        v.push(blk[(i, j)].re);
                        v.push(blk[(i, j)].im);
                    }
                }
            }
            v
        };
        let id = flatten(&BlockDiagonal::identity(mult));
        let mut residual = id.clone();
        for b in &basis {
            let bv = flatten(b);
            let dot: f64 = bv.iter().zip(&id).map(|(x, y)| x * y).sum();
            let nrm: f64 = bv.iter().map(|x| x * x).sum();
            for (r, x) in residual.iter_mut().zip(&bv) {
                *r -= dot / nrm * x;
            }
        }
        let leftover: f64 = residual.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(leftover < 1e-8, "identity not in commutant span: {leftover}");
    }

    #[test]
    fn decompose_trivial_when_irreducible() {
        let comps = decompose(&spec_11(1.0, cx(1.0, 0.0)));
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].offset, 0);
        assert_eq!(comps[0].spec.multiplicities(), &[1, 1]);
    }

    #[test]
    fn decompose_diagonal_22() {
        // d = (2,2) with Y_1 = diag(1,2): two scalar chains.
        let spec = BundleSpec::new(
            1.0,
            vec![2, 2],
            vec![DMatrix::from_row_slice(
                2,
                2,
                &[cx(1.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0), cx(2.0, 0.0)],
            )],
        )
        .unwrap();
        let comps = decompose(&spec);
        assert_eq!(comps.len(), 2);
        for c in &comps {
            assert_eq!(c.offset, 0);
            assert_eq!(c.spec.multiplicities(), &[1, 1]);
            assert_eq!(commutant_basis(&c.spec).len(), 1);
        }
        // The restricted scalars are 1 and 2 up to phase.
        let mut ys: Vec<f64> = comps.iter().map(|c| cabs(c.spec.y(1)[(0, 0)])).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        close(ys[0], 1.0, 1e-10);
        close(ys[1], 2.0, 1e-10);
    }

    #[test]
    fn decompose_zero_block_splits_grades() {
        // d = (1,1), y = 0: components of multiplicity (1) at grades 0 and 1.
        let comps = decompose(&spec_11(0.75, cx(0.0, 0.0)));
        assert_eq!(comps.len(), 2);
        let offsets: Vec<usize> = comps.iter().map(|c| c.offset).collect();
        assert_eq!(offsets, vec![0, 1]);
        assert_eq!(comps[0].spec.multiplicities(), &[1]);
        assert_eq!(comps[1].spec.multiplicities(), &[1]);
        close(comps[0].spec.eta(), 0.75, 0.0);
        close(comps[1].spec.eta(), 1.75, 0.0);
    }

    #[test]
    fn decompose_reassembles_multiplier() {
        let spec = BundleSpec::new(
            1.2,
            vec![2, 2],
            vec![DMatrix::from_row_slice(
                2,
                2,
                &[cx(1.0, 0.0), cx(0.0, 0.0), cx(0.0, 0.0), cx(0.0, 2.0)],
            )],
        )
        .unwrap();
        let comps = decompose(&spec);
        assert_eq!(comps.len(), 2);
        let g = Moebius64::point_section(cx(0.25, -0.1)).unwrap();
        let z = cx(0.1, 0.3);
        let j = multiplier(&spec, &g, z).unwrap();

        // Assemble U: columns ordered component by component, grade-aligned.
        let dim = spec.dim();
        let offsets = spec.offsets();
        let mut u = DMatrix::from_element(dim, dim, cx(0.0, 0.0));
        let mut col = 0;
        let mut sizes = Vec::new();
        for c in &comps {
            let mut size = 0;
            for (k, b) in c.basis.iter().enumerate() {
                let parent = c.offset + k;
                for q in 0..b.ncols() {
                    u.view_mut((offsets[parent], col), (b.nrows(), 1))
                        .copy_from(&b.column(q));
                    col += 1;
                    size += 1;
                }
            }
            sizes.push(size);
        }
        assert_eq!(col, dim);

        // Direct sum of component multipliers in the component layout.
        let mut direct = DMatrix::from_element(dim, dim, cx(0.0, 0.0));
        let mut off = 0;
        for (c, &size) in comps.iter().zip(&sizes) {
            let jc = multiplier(&c.spec, &g, z).unwrap();
            direct.view_mut((off, off), (size, size)).copy_from(&jc);
            off += size;
        }

        let rhs = &u * direct * u.adjoint();
        assert!(max_abs(&(j - rhs)) < 1e-10);
    }

    #[test]
    fn canonical_scalar_chain_examples() {
        let spec = BundleSpec::scalar_chain(1.0, &[cx(1.0, 0.0), cx(1.0, 0.0)]);
        let canon = canonical_scalar_chain(&spec).unwrap();
        assert_eq!(canon, spec);

        let spec = BundleSpec::scalar_chain(1.0, &[cx(-2.0, 0.0), cx(0.0, 1.0)]);
        let canon = canonical_scalar_chain(&spec).unwrap();
        close(canon.y(1)[(0, 0)].re, 2.0, 1e-15);
        close(canon.y(1)[(0, 0)].im, 0.0, 1e-15);
        close(canon.y(2)[(0, 0)].re, 1.0, 1e-15);
        close(canon.y(2)[(0, 0)].im, 0.0, 1e-15);

        // Idempotent.
        assert_eq!(canonical_scalar_chain(&canon).unwrap(), canon);

        // Rejects wider patterns.
        assert!(canonical_scalar_chain(&spec_121(1.0, 1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn scalar_chain_irreducible_iff_nonzero() {
        let spec = BundleSpec::scalar_chain(1.0, &[cx(0.4, 0.3), cx(-0.2, 0.1)]);
        assert_eq!(commutant_basis(&spec).len(), 1);
        let spec = BundleSpec::scalar_chain(1.0, &[cx(0.4, 0.3), cx(0.0, 0.0)]);
        assert!(commutant_basis(&spec).len() > 1);
    }

    #[test]
    fn canonical_121_examples() {
        let (a, b, c) = canonical_121(&spec_121(1.0, 1.0, 1.0, 0.0)).unwrap();
        close(a, 1.0, 1e-14);
        close(b, 1.0, 1e-14);
        close(c, 0.0, 1e-14);

        // Y_1 = (0; 2), Y_2 = (0, 3): the frame permutation gives (2, 3, 0).
        let spec = BundleSpec::new(
            1.0,
            vec![1, 2, 1],
            vec![
                DMatrix::from_row_slice(2, 1, &[cx(0.0, 0.0), cx(2.0, 0.0)]),
                DMatrix::from_row_slice(1, 2, &[cx(0.0, 0.0), cx(3.0, 0.0)]),
            ],
        )
        .unwrap();
        let (a, b, c) = canonical_121(&spec).unwrap();
        close(a, 2.0, 1e-14);
        close(b, 3.0, 1e-14);
        close(c, 0.0, 1e-14);

        assert!(canonical_121(&spec_11(1.0, cx(1.0, 0.0))).is_err());
    }

    #[test]
    fn canonical_121_irreducibility_cross_check() {
        for &(a, b, c) in &[(1.0, 0.7, 0.4), (0.0, 0.7, 0.4), (1.0, 0.0, 0.4), (1.0, 0.7, 0.0)] {
            let spec = spec_121(1.0, a, b, c);
            let dim = commutant_basis(&spec).len();
            let (ca, cb, cc) = canonical_121(&spec).unwrap();
            let irreducible = ca > 1e-12 && cb > 1e-12 && cc > 1e-12;
            assert_eq!(dim == 1, irreducible, "({a},{b},{c}) -> dim {dim}");
        }
    }

    #[test]
    fn canonical_121_unitary_invariance() {
        let spec = spec_121(1.0, 0.9, 0.55, 0.35);
        let (a0, b0, c0) = canonical_121(&spec).unwrap();
        // A handful of deterministic block unitaries.
        for k in 0..20 {
            let th = 0.3 + 0.17 * (k as f64);
            let (s, cth) = (th.sin(), th.cos());
            let u = BlockDiagonal::new(vec![
                DMatrix::from_element(1, 1, cx(th.cos(), th.sin())),
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[cx(cth, 0.0), cx(-s, 0.0), cx(s, 0.0), cx(cth, 0.0)],
                ) * cx((0.5 * th).cos(), (0.5 * th).sin()),
                DMatrix::from_element(1, 1, cx((1.7 * th).cos(), -(1.7 * th).sin())),
            ])
            .unwrap();
            let conj = spec.conjugate_unitary(&u).unwrap();
            let (a, b, c) = canonical_121(&conj).unwrap();
            close(a, a0, 1e-12);
            close(b, b0, 1e-12);
            close(c, c0, 1e-12);
        }
    }
}
