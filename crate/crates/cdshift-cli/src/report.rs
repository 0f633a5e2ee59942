//! Structured reports: every numerical claim carries the tolerance it was
//! tested against, and identical inputs produce byte-identical output.

use cdshift_core::verify::{IdentityCheck, Tolerances};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Stable exit-code contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    /// All requested checks passed.
    Pass = 0,
    /// Valid input whose kernel does not exist.
    ClassificationNegative = 1,
    /// Unreadable or shape-invalid input.
    InputError = 2,
    /// A numerical check failed or a computation broke down.
    NumericalFailure = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn status(self) -> &'static str {
        match self {
            Exit::Pass => "ok",
            Exit::ClassificationNegative => "kernel-absent",
            Exit::InputError => "input-error",
            Exit::NumericalFailure => "numerical-failure",
        }
    }
}

/// Effective tolerance table; serialized into every report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TolTable {
    pub cocycle: f64,
    pub two_path_multiplier: f64,
    pub normalizer_equivalence: f64,
    pub intertwining: f64,
    pub leibnitz: f64,
    pub kernel_invariance: f64,
    pub transport: f64,
    pub eta_bisection: f64,
}

impl Default for TolTable {
    fn default() -> Self {
        Self {
            cocycle: 1e-9,
            two_path_multiplier: 1e-10,
            normalizer_equivalence: 1e-10,
            intertwining: 1e-8,
            leibnitz: 1e-10,
            kernel_invariance: 1e-8,
            transport: 1e-9,
            eta_bisection: 1e-6,
        }
    }
}

impl TolTable {
    pub fn to_core(self) -> Tolerances<f64> {
        Tolerances {
            cocycle: self.cocycle,
            two_path_multiplier: self.two_path_multiplier,
            normalizer_equivalence: self.normalizer_equivalence,
            intertwining: self.intertwining,
            leibnitz: self.leibnitz,
            kernel_invariance: self.kernel_invariance,
            transport: self.transport,
        }
    }

    /// Apply one `name=value` override.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), String> {
        match name {
            "cocycle" => self.cocycle = value,
            "two_path_multiplier" => self.two_path_multiplier = value,
            "normalizer_equivalence" => self.normalizer_equivalence = value,
            "intertwining" => self.intertwining = value,
            "leibnitz" => self.leibnitz = value,
            "kernel_invariance" => self.kernel_invariance = value,
            "transport" => self.transport = value,
            "eta_bisection" => self.eta_bisection = value,
            other => return Err(format!("unknown tolerance name: {other}")),
        }
        Ok(())
    }
}

/// One residual check in a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub pass: bool,
}

impl From<&IdentityCheck<f64>> for CheckEntry {
    fn from(c: &IdentityCheck<f64>) -> Self {
        Self {
            name: c.name.to_string(),
            max_residual: c.max_residual,
            tolerance: c.tolerance,
            samples: c.samples,
            pass: c.pass,
        }
    }
}

/// The report emitted by every subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub spec_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tolerances: TolTable,
    pub results: Value,
    pub checks: Vec<CheckEntry>,
    pub status: String,
    pub exit_code: i32,
}

impl Report {
    pub fn new(command: String, spec_digest: String, tolerances: TolTable) -> Self {
        Self {
            command,
            spec_digest,
            seed: None,
            tolerances,
            results: Value::Null,
            checks: Vec::new(),
            status: Exit::Pass.status().into(),
            exit_code: 0,
        }
    }

    pub fn finish(&mut self, exit: Exit) {
        self.status = exit.status().into();
        self.exit_code = exit.code();
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable report");
        s.push('\n');
        s
    }

    /// Short human summary.
    pub fn render_human(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("command: {}\n", self.command));
        out.push_str(&format!("spec:    {}\n", self.spec_digest));
        if let Some(seed) = self.seed {
            out.push_str(&format!("seed:    {seed}\n"));
        }
        if let Value::Object(map) = &self.results {
            for (k, v) in map {
                out.push_str(&format!("{k}: {}\n", compact(v)));
            }
        }
        for c in &self.checks {
            out.push_str(&format!(
                "check {:<24} {} residual {:.3e} (tolerance {:.1e}, {} samples)\n",
                c.name,
                if c.pass { "pass" } else { "FAIL" },
                c.max_residual,
                c.tolerance,
                c.samples
            ));
        }
        out.push_str(&format!("status: {} (exit {})\n", self.status, self.exit_code));
        out
    }
}

fn compact(v: &Value) -> String {
    let s = serde_json::to_string(v).unwrap_or_default();
    if s.len() > 120 {
        format!("{}...", &s[..117])
    } else {
        s
    }
}
