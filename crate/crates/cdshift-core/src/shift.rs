//! The concrete weighted block-shift realization: level coefficient
//! matrices, shift blocks, boundedness and perturbation diagnostics,
//! similarity invariants and the contraction classifier.
//!
//! Level `n` carries the graded basis functions whose grade-`l` component
//! is proportional to `z^{n-l}`; the numeric coefficient matrix `E(n)` is
//! block lower triangular with strictly positive diagonal scalars, and the
//! shift block `M(n)` mapping level `n` into level `n+1` solves
//! `E(n+1) M(n) = E(n)` (columns embedded when a new grade appears).
//! Multiplication by `z` leaves monomial coefficients untouched, which is
//! what makes that matrix equality the definition of the realization.

use nalgebra::{Complex, DMatrix};

use crate::bundle::BundleSpec;
use crate::error::{Error, Result};
use crate::scalar::{as_f64, czero, re, t, ti, Scalar};
use crate::special::{ln_factorial, ln_pochhammer};

/// Basis-normalization coefficient: the coefficient of `z^{n-l}` in the
/// scaled derivative of the grade-`j` level-`n` basis monomial,
///
/// ```text
/// c(eta, l, j, n) = 1/((l-j)! (2 eta + 2j)_{l-j})
///                   * sqrt((2 eta + 2j)_{n-j} / (n-j)!) * (n-j)!/(n-l)!
/// ```
///
/// computed through log-gamma so levels up to 10^3 stay in range.
pub fn basis_coefficient<T: Scalar>(eta: T, l: usize, j: usize, n: usize) -> Result<T> {
    if eta <= T::zero() {
        return Err(Error::NonPositiveEta { eta: as_f64(eta) });
    }
    if j > l || l > n {
        return Err(Error::ShapeMismatch(format!(
            "basis coefficient requires j <= l <= n, got (l, j, n) = ({l}, {j}, {n})"
        )));
    }
    let base = eta + eta + ti::<T>(2 * j);
    let ln = -ln_factorial::<T>(l - j) - ln_pochhammer(base, l - j)?
        + (ln_pochhammer(base, n - j)? - ln_factorial::<T>(n - j)) * t(0.5)
        + ln_factorial::<T>(n - j)
        - ln_factorial::<T>(n - l);
    Ok(ln.exp())
}

/// Number of grades present at level `n` (grades fill up until `n = m`).
pub fn grades_at_level<T: Scalar>(spec: &BundleSpec<T>, n: usize) -> usize {
    spec.top_grade().min(n)
}

/// Dimension of level `n`.
pub fn level_dim<T: Scalar>(spec: &BundleSpec<T>, n: usize) -> usize {
    spec.multiplicities()[..=grades_at_level(spec, n)]
        .iter()
        .sum()
}

/// The level-`n` coefficient matrix: block `(l, j)` is
/// `c(eta, l, j, n) Y_l ... Y_{j+1}` for `l >= j`, zero above the block
/// diagonal.  Invertible since the diagonal scalars are positive.
pub fn e_matrix<T: Scalar>(spec: &BundleSpec<T>, n: usize) -> Result<DMatrix<Complex<T>>> {
    let g = grades_at_level(spec, n);
    let dim = level_dim(spec, n);
    let offsets = spec.offsets();
    let mut out = DMatrix::from_element(dim, dim, czero());
    for l in 0..=g {
        for j in 0..=l {
            let c = basis_coefficient(spec.eta(), l, j, n)?;
            let blk = spec.y_product(l, j) * re(c);
            out.view_mut(
                (offsets[l], offsets[j]),
                (spec.multiplicities()[l], spec.multiplicities()[j]),
            )
            .copy_from(&blk);
        }
    }
    Ok(out)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm<T: Scalar>(m: &DMatrix<Complex<T>>) -> T {
    let sv = m.clone().singular_values();
    sv.iter().fold(T::zero(), |a, &b| a.max(b))
}

fn condition_estimate<T: Scalar>(m: &DMatrix<Complex<T>>) -> T {
    let sv = m.clone().singular_values();
    let mut lo = sv[0];
    let mut hi = sv[0];
    for &v in sv.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo <= T::zero() {
        T::max_value().unwrap_or_else(T::one)
    } else {
        hi / lo
    }
}

/// The shift block `M(n)` solving `E(n+1) M(n) = E(n)` (with `E(n)`'s rows
/// embedded into the level-`n+1` grade layout), by block forward
/// substitution on the lower-triangular structure.
pub fn shift_block<T: Scalar>(spec: &BundleSpec<T>, n: usize) -> Result<DMatrix<Complex<T>>> {
    let e_next = e_matrix(spec, n + 1)?;
    let cond = condition_estimate(&e_next);
    if cond > t(1e12) {
        return Err(Error::IllConditioned {
            level: n + 1,
            condition: as_f64(cond),
        });
    }
    let e_cur = e_matrix(spec, n)?;
    let rows_next = level_dim(spec, n + 1);
    let cols_cur = level_dim(spec, n);
    let offsets = spec.offsets();
    let g_next = grades_at_level(spec, n + 1);

    // Right-hand side: E(n) with zero rows for a grade that first appears
    // at level n+1.
    let mut rhs = DMatrix::from_element(rows_next, cols_cur, czero());
    rhs.view_mut((0, 0), (e_cur.nrows(), cols_cur)).copy_from(&e_cur);

    // Forward substitution over block rows; diagonal blocks are positive
    // scalars times the identity.
    let mut x = DMatrix::from_element(rows_next, cols_cur, czero());
    for l in 0..=g_next {
        let dl = spec.multiplicities()[l];
        let mut acc = rhs.view((offsets[l], 0), (dl, cols_cur)).into_owned();
        for k in 0..l {
            let dk = spec.multiplicities()[k];
            let elk = e_next.view((offsets[l], offsets[k]), (dl, dk));
            let xk = x.view((offsets[k], 0), (dk, cols_cur));
            acc -= elk * xk;
        }
        let diag = basis_coefficient(spec.eta(), l, l, n + 1)?;
        acc *= re(T::one() / diag);
        x.view_mut((offsets[l], 0), (dl, cols_cur)).copy_from(&acc);
    }
    Ok(x)
}

/// The assembled realization up to level `n_max`.
#[derive(Debug, Clone)]
pub struct ShiftRealization<T: Scalar> {
    spec: BundleSpec<T>,
    blocks: Vec<DMatrix<Complex<T>>>,
}

impl<T: Scalar> ShiftRealization<T> {
    /// Compute blocks `M(0), ..., M(n_max - 1)`.
    pub fn build(spec: &BundleSpec<T>, n_max: usize) -> Result<Self> {
        if spec.eta() <= T::zero() {
            return Err(Error::NonPositiveEta {
                eta: as_f64(spec.eta()),
            });
        }
        let blocks = (0..n_max)
            .map(|n| shift_block(spec, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            blocks,
        })
    }

    pub fn spec(&self) -> &BundleSpec<T> {
        &self.spec
    }

    pub fn n_max(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, n: usize) -> &DMatrix<Complex<T>> {
        &self.blocks[n]
    }

    pub fn level_dim(&self, n: usize) -> usize {
        level_dim(&self.spec, n)
    }
}

/// One diagonal weight of the realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightEntry<T: Scalar> {
    pub level: usize,
    pub block: usize,
    pub entry: usize,
    pub weight: T,
}

/// Least-squares fit of `ln y ~ ln C + e ln n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit<T: Scalar> {
    pub exponent: T,
    pub constant: T,
}

/// Diagonal weights per level and block, with the asymptotic fit of the
/// grade-0 deviation from one.
#[derive(Debug, Clone)]
pub struct WeightProfile<T: Scalar> {
    entries: Vec<WeightEntry<T>>,
    top_grade: usize,
    n_max: usize,
    fit: Option<LogLogFit<T>>,
}

impl<T: Scalar> WeightProfile<T> {
    /// Assemble synthetic profiles (tests, permutation checks).
    pub fn from_entries(entries: Vec<WeightEntry<T>>, top_grade: usize, n_max: usize) -> Self {
        let fit = fit_grade0_deviation(&entries);
        Self {
            entries,
            top_grade,
            n_max,
            fit,
        }
    }

    pub fn entries(&self) -> &[WeightEntry<T>] {
        &self.entries
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn top_grade(&self) -> usize {
        self.top_grade
    }

    pub fn fit(&self) -> Option<LogLogFit<T>> {
        self.fit
    }
}

fn fit_loglog<T: Scalar>(points: &[(usize, T)]) -> Option<LogLogFit<T>> {
    let usable: Vec<(T, T)> = points
        .iter()
        .filter(|(_, y)| *y > t(1e-14))
        .map(|&(n, y)| (ti::<T>(n).ln(), y.ln()))
        .collect();
    if usable.len() < 2 {
        return None;
    }
    let n = ti::<T>(usable.len());
    let sx: T = usable.iter().fold(T::zero(), |a, &(x, _)| a + x);
    let sy: T = usable.iter().fold(T::zero(), |a, &(_, y)| a + y);
    let sxx: T = usable.iter().fold(T::zero(), |a, &(x, _)| a + x * x);
    let sxy: T = usable.iter().fold(T::zero(), |a, &(x, y)| a + x * y);
    let denom = n * sxx - sx * sx;
    if denom.abs() <= T::identity_slack() {
        return None;
    }
    let exponent = (n * sxy - sx * sy) / denom;
    let constant = ((sy - exponent * sx) / n).exp();
    Some(LogLogFit { exponent, constant })
}

fn fit_grade0_deviation<T: Scalar>(entries: &[WeightEntry<T>]) -> Option<LogLogFit<T>> {
    let mut pts: Vec<(usize, T)> = entries
        .iter()
        .filter(|e| e.block == 0 && e.entry == 0)
        .map(|e| (e.level, (e.weight - T::one()).abs()))
        .collect();
    pts.sort_by_key(|&(n, _)| n);
    // Top half of the available range.
    let half = pts.len() / 2;
    fit_loglog(&pts[half..])
}

/// Extract the diagonal weights of `M(n)` for `m <= n < n_max` from the
/// realization.  The diagonal blocks are exact scalar multiples of the
/// identity by the triangular structure.
pub fn weight_profile<T: Scalar>(realization: &ShiftRealization<T>) -> WeightProfile<T> {
    let spec = realization.spec();
    let m = spec.top_grade();
    let offsets = spec.offsets();
    let mut entries = Vec::new();
    for n in m..realization.n_max() {
        let blk = realization.block(n);
        for j in 0..=m {
            for q in 0..spec.multiplicities()[j] {
                let idx = offsets[j] + q;
                entries.push(WeightEntry {
                    level: n,
                    block: j,
                    entry: q,
                    weight: blk[(idx, idx)].re,
                });
            }
        }
    }
    WeightProfile::from_entries(entries, m, realization.n_max())
}

/// Boundedness and perturbation diagnostics of the realization.
#[derive(Debug, Clone)]
pub struct AsymptoticsReport<T: Scalar> {
    pub n_max: usize,
    /// sup over computed levels of the spectral norm of `M(n)`.
    pub sup_norm: T,
    /// Last increment of the sup-norm sequence (tends to zero).
    pub final_norm_increment: T,
    /// `||M(n_max - 1) - I||`.
    pub final_deviation: T,
    /// max over `n >= max(m, 50)` of `n * ||M(n) - I||`.
    pub max_scaled_deviation: T,
    /// Log-log fit of `||M(n) - I||` over the top half of the range.
    pub deviation_fit: Option<LogLogFit<T>>,
    /// Partial sums of `||M(n) - I||_F^2` at doubling checkpoints.
    pub hs_partial_sums: Vec<(usize, T)>,
    /// Ratio of the last two doubling-window sums (about 1/2 for
    /// square-summable `1/n` tails).
    pub hs_tail_ratio: Option<T>,
    /// True when the tail ratio certifies a Cauchy tail (or the deviations
    /// vanish identically).
    pub hs_converged: bool,
    /// All deviations below roundoff: the unweighted shift itself.
    pub exactly_unweighted: bool,
}

/// Tail-ratio threshold certifying a square-summable perturbation; the
/// asymptotic window ratio for `1/n^2` terms is one half.
const HS_RATIO_THRESHOLD: f64 = 0.56;

/// Compute the diagnostics over levels `0..n_max`.  Requires `n_max >= 50`.
pub fn asymptotic_diagnostics<T: Scalar>(
    spec: &BundleSpec<T>,
    n_max: usize,
) -> Result<AsymptoticsReport<T>> {
    if n_max < 50 {
        return Err(Error::ShapeMismatch(format!(
            "diagnostics need n_max >= 50, got {n_max}"
        )));
    }
    let realization = ShiftRealization::build(spec, n_max)?;
    let m = spec.top_grade();
    let d = spec.dim();
    let id: DMatrix<Complex<T>> = DMatrix::identity(d, d);

    let mut sup = T::zero();
    let mut prev_norm = T::zero();
    let mut final_increment = T::zero();
    let mut deviations: Vec<(usize, T)> = Vec::new();
    let mut hs_running = T::zero();
    let mut hs_sums: Vec<(usize, T)> = Vec::new();
    let mut checkpoint = 8.max(2 * m.max(1));
    // Exact quarter/half/full sums so the tail-ratio windows really halve.
    let (mut sum_quarter, mut sum_half) = (None, None);

    for n in 0..n_max {
        let blk = realization.block(n);
        let norm = spectral_norm(blk);
        final_increment = (norm - prev_norm).abs();
        prev_norm = norm;
        sup = sup.max(norm);
        if n >= m {
            let dev = blk - &id;
            deviations.push((n, spectral_norm(&dev)));
            let frob = dev.iter().fold(T::zero(), |a, v| a + v.norm_sqr());
            hs_running += frob;
            if n + 1 == checkpoint || n + 1 == n_max {
                hs_sums.push((n + 1, hs_running));
                if n + 1 == checkpoint {
                    checkpoint *= 2;
                }
            }
            if n + 1 == n_max / 4 {
                sum_quarter = Some(hs_running);
            }
            if n + 1 == n_max / 2 {
                sum_half = Some(hs_running);
            }
        }
    }

    let final_deviation = deviations.last().map(|&(_, v)| v).unwrap_or_else(T::zero);
    let mut max_scaled = T::zero();
    for &(n, v) in &deviations {
        if n >= 50.max(m) {
            max_scaled = max_scaled.max(ti::<T>(n) * v);
        }
    }
    let half_start = deviations.len() / 2;
    let deviation_fit = fit_loglog(&deviations[half_start..]);

    let exactly_unweighted = deviations.iter().all(|&(_, v)| v <= t(1e-13));

    // Window sums over the exact last two halvings of the range.
    let hs_tail_ratio = match (sum_quarter, sum_half) {
        (Some(s1), Some(s2)) if s2 - s1 > t(1e-300) => Some((hs_running - s2) / (s2 - s1)),
        _ => None,
    };
    let hs_converged =
        exactly_unweighted || hs_tail_ratio.map_or(false, |r| r < t(HS_RATIO_THRESHOLD));

    Ok(AsymptoticsReport {
        n_max,
        sup_norm: sup,
        final_norm_increment: final_increment,
        final_deviation,
        max_scaled_deviation: max_scaled,
        deviation_fit,
        hs_partial_sums: hs_sums,
        hs_tail_ratio,
        hs_converged,
        exactly_unweighted,
    })
}

/// Recover the twist and the multiplicity pattern from the diagonal
/// weights: the grade-0 weight inverts to the twist exactly, and the
/// families with distinct level offsets count the multiplicities.
pub fn recover_parameters<T: Scalar>(profile: &WeightProfile<T>) -> Result<(T, Vec<usize>)> {
    let n_max = profile.n_max();
    if n_max < profile.top_grade() + 2 {
        return Err(Error::NotSeparable("profile holds too few levels".into()));
    }
    // Top decade of available levels.
    let start = profile.top_grade().max(n_max * 9 / 10);
    let mut eta_estimates: Vec<T> = Vec::new();
    let mut mults: Option<Vec<usize>> = None;
    let mut used = 0usize;

    for n in start..n_max {
        let mut ws: Vec<T> = profile
            .entries()
            .iter()
            .filter(|e| e.level == n)
            .map(|e| e.weight)
            .collect();
        if ws.is_empty() {
            continue;
        }
        used += 1;
        ws.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // Family gaps are Theta(1/n); within-family spread is roundoff.
        let tol = t::<T>(0.05) / ti::<T>(n + 1);
        let mut counts: Vec<usize> = vec![1];
        for k in 1..ws.len() {
            if ws[k - 1] - ws[k] > tol {
                counts.push(1);
            } else {
                *counts.last_mut().unwrap() += 1;
            }
        }
        match &mults {
            None => mults = Some(counts),
            Some(prev) => {
                if *prev != counts {
                    return Err(Error::NotSeparable(format!(
                        "family pattern changed between levels: {prev:?} vs {counts:?}"
                    )));
                }
            }
        }
        // Grade 0 carries the largest weight; invert w^2 = (n+1)/(2 eta + n).
        let w0 = ws[0];
        let eta = (ti::<T>(n + 1) / (w0 * w0) - ti::<T>(n)) * t(0.5);
        eta_estimates.push(eta);
    }
    if used == 0 {
        return Err(Error::NotSeparable("no levels in the top decade".into()));
    }
    let mults = mults.unwrap();
    if mults.len() != profile.top_grade() + 1 {
        return Err(Error::NotSeparable(format!(
            "found {} weight families for {} grades",
            mults.len(),
            profile.top_grade() + 1
        )));
    }
    let eta = eta_estimates
        .iter()
        .fold(T::zero(), |a, &b| a + b)
        / ti::<T>(eta_estimates.len());
    Ok((eta, mults))
}

/// Similarity invariant: equal twists (within 1e-9) and equal multiplicity
/// patterns.  The blocks themselves do not matter.
pub fn similar<T: Scalar>(spec1: &BundleSpec<T>, spec2: &BundleSpec<T>) -> bool {
    (spec1.eta() - spec2.eta()).abs() <= t(1e-9)
        && spec1.multiplicities() == spec2.multiplicities()
}

/// The two similarity classes a realization can land in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionClass {
    SimilarToContraction,
    NotPowerBounded,
}

/// Classify by the twist: at least one half means every diagonal weight is
/// at most one (contraction after similarity), strictly below one half the
/// grade-0 power norms grow without bound.
pub fn contraction_class<T: Scalar>(spec: &BundleSpec<T>) -> Result<ContractionClass> {
    if spec.eta() <= T::zero() {
        return Err(Error::NonPositiveEta {
            eta: as_f64(spec.eta()),
        });
    }
    if spec.eta() >= t(0.5) {
        Ok(ContractionClass::SimilarToContraction)
    } else {
        Ok(ContractionClass::NotPowerBounded)
    }
}

/// Closed-form grade-0 power norm `||M^n e|| = sqrt(n! / (2 eta)_n)`,
/// through log-gamma.
pub fn grade0_power_norm<T: Scalar>(eta: T, n: usize) -> Result<T> {
    let ln = (ln_factorial::<T>(n) - ln_pochhammer(eta + eta, n)?) * t(0.5);
    Ok(ln.exp())
}

/// Smallest power at which the grade-0 norm exceeds `threshold` (twists
/// below one half only); found by doubling then bisection on the exact
/// closed form.
pub fn power_norm_exceeds<T: Scalar>(eta: T, threshold: T) -> Result<Option<usize>> {
    if eta >= t(0.5) {
        return Ok(None);
    }
    let mut hi = 4usize;
    let cap = 1usize << 60;
    while grade0_power_norm(eta, hi)? <= threshold {
        hi *= 2;
        if hi > cap {
            return Ok(None);
        }
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if grade0_power_norm(eta, mid)? > threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Verify that every diagonal weight through `n_max` is at most one (plus
/// roundoff); this is the contraction half of the dichotomy.
pub fn diagonal_weights_bounded_by_one<T: Scalar>(spec: &BundleSpec<T>, n_max: usize) -> Result<bool> {
    if spec.eta() <= T::zero() {
        return Err(Error::NonPositiveEta {
            eta: as_f64(spec.eta()),
        });
    }
    // w(n, j)^2 = (n - j + 1) / (2 eta + j + n)
    for n in spec.top_grade()..n_max {
        for j in 0..=spec.top_grade() {
            let w2 = ti::<T>(n - j + 1) / (spec.eta() + spec.eta() + ti::<T>(j + n));
            if w2 > T::one() + t(1e-12) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
