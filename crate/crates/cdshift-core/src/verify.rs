//! Seeded residual suite: every identity the library claims, checked on
//! random panels with one worst-case residual per identity.

use nalgebra::{Complex, DMatrix};

use crate::bundle::{cocycle_residual, max_abs, multiplier, multiplier_exp_form, BundleSpec};
use crate::error::Result;
use crate::kernel::{
    closed_form_normalizer, gamma_apply, kernel_exists, kernel_invariance_residual,
    solve_normalizer, transport_residual, NormalizerSolution,
};
use crate::sampling::Sampler;
use crate::scalar::{cone, re, t, ti, Scalar};
use crate::series::{leibnitz_rhs, GradedSeries, PowerSeries};

/// Tolerance table for the residual suite; the fields mirror the check
/// names in the emitted reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T: Scalar> {
    pub cocycle: T,
    pub two_path_multiplier: T,
    pub normalizer_equivalence: T,
    pub intertwining: T,
    pub leibnitz: T,
    pub kernel_invariance: T,
    pub transport: T,
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            cocycle: t(1e-9),
            two_path_multiplier: t(1e-10),
            normalizer_equivalence: t(1e-10),
            intertwining: t(1e-8),
            leibnitz: t(1e-10),
            kernel_invariance: t(1e-8),
            transport: t(1e-9),
        }
    }
}

/// Worst residual of one identity over a sample panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck<T: Scalar> {
    pub name: &'static str,
    pub max_residual: T,
    pub tolerance: T,
    pub samples: usize,
    pub pass: bool,
}

impl<T: Scalar> IdentityCheck<T> {
    fn new(name: &'static str, max_residual: T, tolerance: T, samples: usize) -> Self {
        Self {
            name,
            max_residual,
            tolerance,
            samples,
            pass: max_residual <= tolerance,
        }
    }
}

/// Outcome of the full residual suite on one spec.
#[derive(Debug, Clone)]
pub struct SuiteReport<T: Scalar> {
    pub checks: Vec<IdentityCheck<T>>,
    pub kernel_exists: bool,
}

impl<T: Scalar> SuiteReport<T> {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Spread of the group-element panel around the identity.
const GROUP_SCALE: f64 = 0.3;

/// Worst cocycle residual over `samples` random `(g, h, z)` triples.
pub fn max_cocycle_residual<T: Scalar>(
    spec: &BundleSpec<T>,
    sampler: &mut Sampler<T>,
    samples: usize,
) -> Result<T> {
    let mut worst = T::zero();
    for _ in 0..samples {
        let g = sampler.moebius_near_identity(GROUP_SCALE);
        let h = sampler.moebius_near_identity(GROUP_SCALE);
        let z = sampler.disc_point(0.4);
        worst = worst.max(cocycle_residual(spec, &g, &h, z)?);
    }
    Ok(worst)
}

/// Worst two-path multiplier deviation over random `(g, z)` pairs.
pub fn max_two_path_residual<T: Scalar>(
    spec: &BundleSpec<T>,
    sampler: &mut Sampler<T>,
    samples: usize,
) -> Result<T> {
    let mut worst = T::zero();
    for _ in 0..samples {
        let g = sampler.moebius_near_identity(GROUP_SCALE);
        let z = sampler.disc_point(0.4);
        let a = multiplier(spec, &g, z)?;
        let b = multiplier_exp_form(spec, &g, z)?;
        worst = worst.max(max_abs(&(a - b)));
    }
    Ok(worst)
}

/// Intertwining residual of the graded operator for one single-grade
/// polynomial and one group element: coefficients of
/// `G((g')^{eta+j} (f o g))` against `J_g . ((G f) o g)`.
pub fn intertwining_residual<T: Scalar>(
    spec: &BundleSpec<T>,
    g: &crate::moebius::MoebiusElement<T>,
    grade: usize,
    entries: &[PowerSeries<T>],
    work_trunc: usize,
) -> Result<T> {
    let m = spec.top_grade();
    let f = GradedSeries::from_grade(spec.multiplicities(), grade, entries, work_trunc)?;

    // Left side: transform the single-grade input at weight eta + j, then
    // apply the graded operator.
    let lambda = spec.eta() + ti(grade);
    let lhs = gamma_apply(spec, None, &f.transform(g, lambda, work_trunc)?)?;

    // Right side: h = G f (a polynomial tuple), then grade p collects
    // (J_g)_{p,l} applied to h_l o g with the matching derivative weight.
    let h = gamma_apply(spec, None, &f)?;
    let out_trunc = work_trunc - m;
    let mut rhs = GradedSeries::zero(spec.multiplicities(), out_trunc);
    let c = g.c();
    for p in 0..=m {
        let dp = spec.multiplicities()[p];
        let mut acc: Vec<nalgebra::DVector<Complex<T>>> =
            vec![nalgebra::DVector::from_element(dp, crate::scalar::czero()); out_trunc + 1];
        for l in 0..=p {
            let mut coeff = cone::<T>();
            for k in 0..(p - l) {
                coeff *= -c / re(ti::<T>(k + 1));
            }
            let yprod = spec.y_product(p, l) * coeff;
            let lam = spec.eta() + ti::<T>(p + l) / t(2.0);
            // Transform each entry of grade l.
            let dl = spec.multiplicities()[l];
            let mut transformed: Vec<PowerSeries<T>> = Vec::with_capacity(dl);
            for q in 0..dl {
                transformed.push(h.entry_series(l, q).transform(g, lam, out_trunc)?);
            }
            for (deg, slot) in acc.iter_mut().enumerate() {
                let v = nalgebra::DVector::from_fn(dl, |q, _| transformed[q].coeff(deg));
                *slot += &yprod * v;
            }
        }
        rhs.set_grade_coeffs(p, &acc);
    }

    let through = lhs.exact_degree().min(out_trunc);
    Ok(lhs.max_diff_through(&rhs, through))
}

/// Worst intertwining residual over a random panel of grades, polynomials
/// and group elements.
pub fn max_intertwining_residual<T: Scalar>(
    spec: &BundleSpec<T>,
    sampler: &mut Sampler<T>,
    samples: usize,
) -> Result<T> {
    let m = spec.top_grade();
    let work = 6 + m + 12;
    let mut worst = T::zero();
    for i in 0..samples {
        let grade = i % (m + 1);
        let g = sampler.moebius_near_identity(GROUP_SCALE);
        let entries: Vec<PowerSeries<T>> = (0..spec.multiplicities()[grade])
            .map(|_| sampler.polynomial(6, work))
            .collect();
        worst = worst.max(intertwining_residual(spec, &g, grade, &entries, work)?);
    }
    Ok(worst)
}

/// Worst derivative-expansion residual over random scalar polynomials.
pub fn max_leibnitz_residual<T: Scalar>(
    sampler: &mut Sampler<T>,
    samples: usize,
) -> Result<T> {
    let mut worst = T::zero();
    let compare_through = 12;
    let work = 40;
    for i in 0..samples {
        let g = sampler.moebius_near_identity(GROUP_SCALE);
        let f = sampler.polynomial(8, work + 5);
        let l = t::<T>([0.5, 1.0, 2.75][i % 3]);
        let k = 1 + i % 5;
        let rhs = leibnitz_rhs(&f, &g, l, k, work)?;
        let oracle = f.transform(&g, l, work + k)?.differentiate(k)?;
        let mut diff = T::zero();
        for n in 0..=compare_through {
            let d = rhs.coeff(n) - oracle.coeff(n);
            diff = diff.max(d.norm_sqr().sqrt());
        }
        worst = worst.max(diff);
    }
    Ok(worst)
}

/// Worst kernel-invariance residual over random `(g, z, w)`.
pub fn max_invariance_residual<T: Scalar>(
    spec: &BundleSpec<T>,
    normalizer: &NormalizerSolution<T>,
    sampler: &mut Sampler<T>,
    samples: usize,
) -> Result<T> {
    let mut worst = T::zero();
    for _ in 0..samples {
        let g = sampler.moebius_near_identity(GROUP_SCALE);
        let z = sampler.disc_point(0.5);
        let w = sampler.disc_point(0.5);
        worst = worst.max(kernel_invariance_residual(spec, normalizer, &g, z, w)?);
    }
    Ok(worst)
}

/// Worst diagonal transport residual over random points `|z| <= 0.6`.
pub fn max_transport_residual<T: Scalar>(
    spec: &BundleSpec<T>,
    normalizer: &NormalizerSolution<T>,
    sampler: &mut Sampler<T>,
    samples: usize,
) -> Result<T> {
    let mut worst = T::zero();
    for _ in 0..samples {
        let z = sampler.disc_point(0.6);
        worst = worst.max(transport_residual(spec, normalizer, z)?);
    }
    Ok(worst)
}

/// Run every applicable identity check on the spec with a fixed seed.
///
/// `supplied_products`, when present, are compared against the forward
/// recursion as an extra check (this is the negative control for
/// deliberately corrupted inputs).
pub fn run_residual_suite<T: Scalar>(
    spec: &BundleSpec<T>,
    seed: u64,
    samples: usize,
    tol: &Tolerances<T>,
    supplied_products: Option<&[DMatrix<Complex<T>>]>,
) -> Result<SuiteReport<T>> {
    let mut sampler = Sampler::<T>::new(seed);
    let mut checks = Vec::new();

    let r = max_cocycle_residual(spec, &mut sampler, samples)?;
    checks.push(IdentityCheck::new("cocycle", r, tol.cocycle, samples));

    let r = max_two_path_residual(spec, &mut sampler, samples)?;
    checks.push(IdentityCheck::new(
        "two-path-multiplier",
        r,
        tol.two_path_multiplier,
        samples,
    ));

    let heavy = (samples / 10).clamp(3, 20);
    let r = max_intertwining_residual(spec, &mut sampler, heavy)?;
    checks.push(IdentityCheck::new("intertwining", r, tol.intertwining, heavy));

    let r = max_leibnitz_residual(&mut sampler, heavy)?;
    checks.push(IdentityCheck::new("leibnitz", r, tol.leibnitz, heavy));

    let classification = kernel_exists(spec);
    if spec.eta() > T::zero() {
        let rec = solve_normalizer(spec)?;
        let closed = closed_form_normalizer(spec)?;
        checks.push(IdentityCheck::new(
            "normalizer-equivalence",
            rec.max_difference(&closed),
            tol.normalizer_equivalence,
            spec.top_grade() + 1,
        ));
        if let Some(products) = supplied_products {
            let supplied = NormalizerSolution::from_products(spec, products.to_vec())?;
            checks.push(IdentityCheck::new(
                "supplied-normalizer",
                rec.max_difference(&supplied),
                tol.normalizer_equivalence,
                products.len(),
            ));
        }
        if classification.exists {
            let sol = classification.solution.as_ref().expect("eta > 0");
            let r = max_invariance_residual(spec, sol, &mut sampler, heavy)?;
            checks.push(IdentityCheck::new(
                "kernel-invariance",
                r,
                tol.kernel_invariance,
                heavy,
            ));
            let r = max_transport_residual(spec, sol, &mut sampler, samples.min(40))?;
            checks.push(IdentityCheck::new(
                "transport",
                r,
                tol.transport,
                samples.min(40),
            ));
        }
    }

    Ok(SuiteReport {
        checks,
        kernel_exists: classification.exists,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cx;

    #[test]
    fn suite_passes_on_scalar_chain() {
        let spec = BundleSpec::scalar_chain(1.0, &[cx(1.0, 0.0), cx(1.0, 0.0)]);
        let report =
            run_residual_suite(&spec, 42, 30, &Tolerances::default(), None).unwrap();
        assert!(report.kernel_exists);
        for c in &report.checks {
            assert!(c.pass, "{}: {} > {}", c.name, c.max_residual, c.tolerance);
        }
    }

    #[test]
    fn suite_detects_corrupted_normalizer() {
        let spec = BundleSpec::scalar_chain(1.0, &[cx(1.0, 0.0)]);
        // Shape-valid but recursion-inconsistent products.
        let bogus = vec![
            DMatrix::from_element(1, 1, cx(1.0, 0.0)),
            DMatrix::from_element(1, 1, cx(1.0, 0.0)), // should be 1/2
        ];
        let report =
            run_residual_suite(&spec, 42, 10, &Tolerances::default(), Some(&bogus)).unwrap();
        let check = report
            .checks
            .iter()
            .find(|c| c.name == "supplied-normalizer")
            .unwrap();
        assert!(!check.pass);
        assert!(!report.all_pass());
    }

    #[test]
    fn suite_deterministic_for_seed() {
        let spec = BundleSpec::scalar_chain(0.9, &[cx(0.8, 0.2)]);
        let a = run_residual_suite(&spec, 7, 12, &Tolerances::default(), None).unwrap();
        let b = run_residual_suite(&spec, 7, 12, &Tolerances::default(), None).unwrap();
        for (x, y) in a.checks.iter().zip(&b.checks) {
            assert_eq!(x.max_residual, y.max_residual);
        }
    }

    #[test]
    fn suite_skips_kernel_checks_without_kernel() {
        let spec = BundleSpec::scalar_chain(0.4, &[cx(1.0, 0.0)]); // P_1 < 0
        let report = run_residual_suite(&spec, 3, 10, &Tolerances::default(), None).unwrap();
        assert!(!report.kernel_exists);
        assert!(report.checks.iter().all(|c| c.name != "kernel-invariance"));
        // Multiplier identities still pass.
        assert!(report.all_pass());
    }
}
