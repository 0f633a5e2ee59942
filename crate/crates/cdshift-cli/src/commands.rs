//! The five subcommands: classify, kernel, realize, verify, canonical.

use std::path::Path;

use cdshift_core::bundle::{canonical_121, canonical_scalar_chain, commutant_basis, decompose};
use cdshift_core::kernel::{
    eta_threshold, kernel_at, kernel_at_origin, kernel_exists, solve_normalizer,
    NormalizerSolution,
};
use cdshift_core::sampling::Sampler;
use cdshift_core::shift::{
    asymptotic_diagnostics, contraction_class, recover_parameters, weight_profile,
    ContractionClass, ShiftRealization,
};
use cdshift_core::verify::{
    max_invariance_residual, max_transport_residual, run_residual_suite,
};
use cdshift_core::{BundleSpec64, C64, Error};
use serde_json::{json, Value};

use crate::report::{CheckEntry, Exit, Report, TolTable};
use crate::spec_io::{matrix_to_rows, SpecFile};

/// Fixed default seed; all sampling in a run derives from one seed.
pub const DEFAULT_SEED: u64 = 1729;

fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

fn contraction_label(class: ContractionClass) -> &'static str {
    match class {
        ContractionClass::SimilarToContraction => "similar-to-contraction",
        ContractionClass::NotPowerBounded => "not-power-bounded",
    }
}

/// Load and validate a spec file; failures map to `InputError`.
pub fn load_spec(path: &Path) -> Result<(SpecFile, BundleSpec64), String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file = SpecFile::parse(&text)?;
    let spec = file.to_spec()?;
    Ok((file, spec))
}

fn classification_results(spec: &BundleSpec64, tol: &TolTable) -> (Value, bool) {
    let commutant = commutant_basis(spec);
    let components = decompose(spec);
    let classification = kernel_exists(spec);
    let threshold = eta_threshold(spec, tol.eta_bisection);

    let comp_json: Vec<Value> = components
        .iter()
        .map(|c| {
            json!({
                "offset": c.offset,
                "eta": c.spec.eta(),
                "multiplicities": c.spec.multiplicities(),
                "irreducible": commutant_basis(&c.spec).len() == 1,
            })
        })
        .collect();

    let min_eigs: Option<Vec<f64>> = classification
        .solution
        .as_ref()
        .map(|s| s.min_eigenvalues().to_vec());

    let kernel_reason = if spec.eta() <= 0.0 {
        Some("eta must be positive".to_string())
    } else if !classification.exists {
        Some("a normalizer product fails positive definiteness".to_string())
    } else {
        None
    };

    let contraction = if classification.exists {
        Some(contraction_label(contraction_class(spec).expect("eta > 0")))
    } else {
        None
    };

    let results = json!({
        "eta": spec.eta(),
        "multiplicities": spec.multiplicities(),
        "dim": spec.dim(),
        "commutant_dimension": commutant.len(),
        "irreducible": commutant.len() == 1,
        "components": comp_json,
        "kernel_exists": classification.exists,
        "kernel_reason": kernel_reason,
        "normalizer_min_eigenvalues": min_eigs,
        "eta_threshold": threshold,
        "similarity_invariants": {
            "eta": spec.eta(),
            "multiplicities": spec.multiplicities(),
        },
        "contraction_class": contraction,
    });
    (results, classification.exists)
}

/// `classify <spec.json>`
pub fn cmd_classify(path: &Path, tol: TolTable, command: String) -> Report {
    let mut report = Report::new(command, String::new(), tol);
    match load_spec(path) {
        Err(msg) => {
            report.results = json!({ "error": msg });
            report.finish(Exit::InputError);
        }
        Ok((file, spec)) => {
            report.spec_digest = file.digest();
            let (results, exists) = classification_results(&spec, &tol);
            report.results = results;
            report.finish(if exists { Exit::Pass } else { Exit::ClassificationNegative });
        }
    }
    report
}

/// `kernel <spec.json> --points <pts.json>`
pub fn cmd_kernel(
    path: &Path,
    points: Vec<(C64, C64)>,
    tol: TolTable,
    command: String,
) -> Report {
    let mut report = Report::new(command, String::new(), tol);
    report.seed = Some(DEFAULT_SEED);
    let (file, spec) = match load_spec(path) {
        Err(msg) => {
            report.results = json!({ "error": msg });
            report.finish(Exit::InputError);
            return report;
        }
        Ok(x) => x,
    };
    report.spec_digest = file.digest();

    let classification = kernel_exists(&spec);
    if !classification.exists {
        report.results = json!({
            "kernel_exists": false,
            "reason": if spec.eta() <= 0.0 {
                "eta must be positive"
            } else {
                "a normalizer product fails positive definiteness"
            },
        });
        report.finish(Exit::ClassificationNegative);
        return report;
    }
    let sol = classification.solution.expect("kernel exists");

    let run = || -> Result<(Value, Vec<CheckEntry>), Error> {
        let origin = kernel_at_origin(&spec, &sol)?;
        let values = points
            .iter()
            .map(|&(z, w)| {
                kernel_at(&spec, &sol, z, w).map(|k| {
                    json!({
                        "z": complex_json(z),
                        "w": complex_json(w),
                        "matrix": matrix_to_rows(&k.value),
                    })
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        // Default residual panel.
        let mut sampler = Sampler::<f64>::new(DEFAULT_SEED);
        let inv = max_invariance_residual(&spec, &sol, &mut sampler, 20)?;
        let tra = max_transport_residual(&spec, &sol, &mut sampler, 20)?;
        let checks = vec![
            CheckEntry {
                name: "kernel-invariance".into(),
                max_residual: inv,
                tolerance: tol.kernel_invariance,
                samples: 20,
                pass: inv <= tol.kernel_invariance,
            },
            CheckEntry {
                name: "transport".into(),
                max_residual: tra,
                tolerance: tol.transport,
                samples: 20,
                pass: tra <= tol.transport,
            },
        ];

        let results = json!({
            "kernel_exists": true,
            "normalizer_products": sol.products().iter().map(matrix_to_rows).collect::<Vec<_>>(),
            "normalizer_min_eigenvalues": sol.min_eigenvalues(),
            "kernel_at_origin": matrix_to_rows(&origin.value),
            "values": values,
        });
        Ok((results, checks))
    };

    match run() {
        Ok((results, checks)) => {
            report.results = results;
            report.checks = checks;
            let all_pass = report.checks.iter().all(|c| c.pass);
            report.finish(if all_pass { Exit::Pass } else { Exit::NumericalFailure });
        }
        Err(e) => {
            report.results = json!({ "error": e.to_string() });
            report.finish(Exit::NumericalFailure);
        }
    }
    report
}

/// `realize <spec.json> --n-max N --out weights.csv`
pub fn cmd_realize(
    path: &Path,
    n_max: usize,
    out: Option<&Path>,
    include_blocks: bool,
    tol: TolTable,
    command: String,
) -> Report {
    let mut report = Report::new(command, String::new(), tol);
    let (file, spec) = match load_spec(path) {
        Err(msg) => {
            report.results = json!({ "error": msg });
            report.finish(Exit::InputError);
            return report;
        }
        Ok(x) => x,
    };
    report.spec_digest = file.digest();
    if n_max == 0 {
        report.results = json!({ "error": "n-max must be at least 1" });
        report.finish(Exit::InputError);
        return report;
    }

    if !kernel_exists(&spec).exists {
        report.results = json!({
            "kernel_exists": false,
            "reason": if spec.eta() <= 0.0 {
                "eta must be positive"
            } else {
                "a normalizer product fails positive definiteness"
            },
        });
        report.finish(Exit::ClassificationNegative);
        return report;
    }

    let run = || -> Result<Value, Error> {
        let realization = ShiftRealization::build(&spec, n_max)?;
        let profile = weight_profile(&realization);

        if let Some(csv_path) = out {
            let mut csv = String::from("n,block,entry,weight\n");
            for e in profile.entries() {
                csv.push_str(&format!("{},{},{},{}\n", e.level, e.block, e.entry, e.weight));
            }
            std::fs::write(csv_path, csv).map_err(|io| {
                Error::ShapeMismatch(format!("cannot write {}: {io}", csv_path.display()))
            })?;
        }

        let mut results = serde_json::Map::new();
        results.insert("kernel_exists".into(), json!(true));
        results.insert("n_max".into(), json!(n_max));
        results.insert(
            "level_dims".into(),
            json!((0..=spec.top_grade().min(n_max))
                .map(|n| realization.level_dim(n))
                .collect::<Vec<_>>()),
        );
        if let Some(csv_path) = out {
            results.insert("weights_csv".into(), json!(csv_path.display().to_string()));
        }
        if n_max >= 50 {
            let diag = asymptotic_diagnostics(&spec, n_max)?;
            results.insert("sup_norm".into(), json!(diag.sup_norm));
            results.insert("final_deviation".into(), json!(diag.final_deviation));
            results.insert(
                "max_scaled_deviation".into(),
                json!(diag.max_scaled_deviation),
            );
            results.insert(
                "decay_exponent".into(),
                json!(diag.deviation_fit.map(|f| f.exponent)),
            );
            results.insert(
                "decay_constant".into(),
                json!(diag.deviation_fit.map(|f| f.constant)),
            );
            results.insert("hs_tail_ratio".into(), json!(diag.hs_tail_ratio));
            results.insert("hs_converged".into(), json!(diag.hs_converged));
            results.insert(
                "exactly_unweighted".into(),
                json!(diag.exactly_unweighted),
            );
        }
        if n_max >= 200 {
            if let Ok((eta, mults)) = recover_parameters(&profile) {
                results.insert("recovered_eta".into(), json!(eta));
                results.insert("recovered_multiplicities".into(), json!(mults));
            }
        }
        if include_blocks {
            results.insert(
                "blocks".into(),
                json!((0..n_max)
                    .map(|n| matrix_to_rows(realization.block(n)))
                    .collect::<Vec<_>>()),
            );
        }
        Ok(Value::Object(results))
    };

    match run() {
        Ok(results) => {
            report.results = results;
            report.finish(Exit::Pass);
        }
        Err(e @ Error::IllConditioned { .. }) => {
            report.results = json!({ "error": e.to_string() });
            report.finish(Exit::NumericalFailure);
        }
        Err(e) => {
            report.results = json!({ "error": e.to_string() });
            report.finish(Exit::NumericalFailure);
        }
    }
    report
}

/// `verify <spec.json> --seed S --samples K`
pub fn cmd_verify(
    path: &Path,
    seed: u64,
    samples: usize,
    tol: TolTable,
    command: String,
) -> Report {
    let mut report = Report::new(command, String::new(), tol);
    report.seed = Some(seed);
    let (file, spec) = match load_spec(path) {
        Err(msg) => {
            report.results = json!({ "error": msg });
            report.finish(Exit::InputError);
            return report;
        }
        Ok(x) => x,
    };
    report.spec_digest = file.digest();
    let products = match file.products() {
        Err(msg) => {
            report.results = json!({ "error": msg });
            report.finish(Exit::InputError);
            return report;
        }
        Ok(p) => p,
    };

    match run_residual_suite(&spec, seed, samples, &tol.to_core(), products.as_deref()) {
        Ok(suite) => {
            report.checks = suite.checks.iter().map(CheckEntry::from).collect();
            report.results = json!({
                "kernel_exists": suite.kernel_exists,
                "samples": samples,
            });
            let exit = if !suite.all_pass() {
                Exit::NumericalFailure
            } else if !suite.kernel_exists {
                Exit::ClassificationNegative
            } else {
                Exit::Pass
            };
            report.finish(exit);
        }
        Err(e) => {
            report.results = json!({ "error": e.to_string() });
            report.finish(Exit::NumericalFailure);
        }
    }
    report
}

/// `canonical <spec.json>`
pub fn cmd_canonical(path: &Path, tol: TolTable, command: String) -> Report {
    let mut report = Report::new(command, String::new(), tol);
    let (file, spec) = match load_spec(path) {
        Err(msg) => {
            report.results = json!({ "error": msg });
            report.finish(Exit::InputError);
            return report;
        }
        Ok(x) => x,
    };
    report.spec_digest = file.digest();

    let classification = kernel_exists(&spec);
    let min_eigs: Option<Vec<f64>> = classification
        .solution
        .as_ref()
        .map(|s| s.min_eigenvalues().to_vec());

    if spec.multiplicities().iter().all(|&d| d == 1) {
        let canon = canonical_scalar_chain(&spec).expect("all multiplicities are one");
        let ys: Vec<f64> = canon.blocks().iter().map(|y| y[(0, 0)].re).collect();
        report.results = json!({
            "family": "scalar-chain",
            "canonical": { "y": ys },
            "kernel_exists": classification.exists,
            "normalizer_min_eigenvalues": min_eigs,
        });
        report.finish(if classification.exists {
            Exit::Pass
        } else {
            Exit::ClassificationNegative
        });
        return report;
    }

    if spec.multiplicities() == [1, 2, 1] {
        let (a, b, c) = canonical_121(&spec).expect("pattern checked");
        let eta = spec.eta();
        // Displayed necessary inequalities for the canonical parameters.
        let a_ok = a * a < 2.0 * eta;
        let b_denom = 1.0 - a * a / (2.0 * (2.0 * eta + 1.0));
        let b_rhs = if b_denom != 0.0 {
            (2.0 * eta + 2.0) / b_denom
        } else {
            f64::INFINITY
        };
        let b_ok = b * b < b_rhs && b_rhs > 0.0;
        let c_ok = c * c < 2.0 * eta + 2.0;
        let displayed_all = a_ok && b_ok && c_ok;
        let joint = classification.exists;
        let mut violated: Vec<&str> = Vec::new();
        if !a_ok {
            violated.push("a^2 < 2*eta");
        }
        if !b_ok {
            violated.push("b^2 < (2*eta+2)/(1 - a^2/(2*(2*eta+1)))");
        }
        if !c_ok {
            violated.push("c^2 < 2*eta+2");
        }
        report.results = json!({
            "family": "one-two-one",
            "canonical": { "a": a, "b": b, "c": c },
            "kernel_exists": joint,
            "normalizer_min_eigenvalues": min_eigs,
            "inequalities": {
                "a_sq_lt_2eta": a_ok,
                "b_sq_bound": b_ok,
                "c_sq_lt_2eta_plus_2": c_ok,
                "displayed_all_hold": displayed_all,
                "recursion_positive": joint,
                "displayed_vs_recursion_disagree": displayed_all != joint,
                "violated": violated,
            },
        });
        report.finish(if joint { Exit::Pass } else { Exit::ClassificationNegative });
        return report;
    }

    report.results = json!({
        "error": format!(
            "canonical forms cover the all-ones and [1,2,1] patterns; got {:?}",
            spec.multiplicities()
        ),
    });
    report.finish(Exit::InputError);
    report
}
