//! `cdshift`: classify, realize and verify graded multiplier bundles over
//! the unit disc from JSON parameter files.
//!
//! Exit codes: 0 all checks pass, 1 valid input without a kernel, 2 input
//! error, 3 numerical failure.

mod commands;
mod report;
mod spec_io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::DEFAULT_SEED;
use report::{Exit, Report, TolTable};

#[derive(Parser)]
#[command(name = "cdshift", version, about = "Graded multiplier bundles over the unit disc: classification, kernels, shift realizations")]
struct Cli {
    /// Print a human-readable summary instead of the structured report.
    #[arg(long, global = true)]
    human: bool,

    /// Tolerance override NAME=VALUE (repeatable); see the report's
    /// `tolerances` table for the names.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    tol: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Irreducibility, kernel existence, twist threshold, similarity
    /// invariants and the contraction class.
    Classify { spec: PathBuf },
    /// Normalizer products, kernel values and the invariance panel.
    Kernel {
        spec: PathBuf,
        /// JSON file with `[z, w]` evaluation pairs; defaults to the origin.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Weighted block-shift realization, weight table and asymptotics.
    Realize {
        spec: PathBuf,
        /// Levels to compute.
        #[arg(long = "n-max", default_value_t = 200)]
        n_max: usize,
        /// Write the weight table as CSV to this path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the raw shift blocks in the report.
        #[arg(long)]
        blocks: bool,
    },
    /// Run the full residual suite with a fixed seed.
    Verify {
        spec: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Canonical parameters for the scalar-chain and (1,2,1) families.
    Canonical { spec: PathBuf },
}

/// Effective tolerances: defaults, then the optional override file named
/// by CDSHIFT_TOL_FILE, then --tol flags.
fn effective_tolerances(flags: &[String]) -> Result<TolTable, String> {
    let mut table = TolTable::default();
    if let Ok(path) = std::env::var("CDSHIFT_TOL_FILE") {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read CDSHIFT_TOL_FILE {path}: {e}"))?;
        let overrides: std::collections::BTreeMap<String, f64> =
            serde_json::from_str(&text).map_err(|e| format!("tolerance file: {e}"))?;
        for (k, v) in overrides {
            table.set(&k, v)?;
        }
    }
    for flag in flags {
        let (name, value) = flag
            .split_once('=')
            .ok_or_else(|| format!("--tol expects NAME=VALUE, got {flag}"))?;
        let value: f64 = value
            .parse()
            .map_err(|e| format!("--tol {name}: bad value ({e})"))?;
        table.set(name, value)?;
    }
    Ok(table)
}

fn main() {
    let cli = Cli::parse();

    let tol = match effective_tolerances(&cli.tol) {
        Ok(t) => t,
        Err(msg) => {
            let mut r = Report::new("tolerances".into(), String::new(), TolTable::default());
            r.results = serde_json::json!({ "error": msg });
            r.finish(Exit::InputError);
            print!("{}", if cli.human { r.render_human() } else { r.render_json() });
            std::process::exit(Exit::InputError.code());
        }
    };

    let report = match &cli.command {
        Command::Classify { spec } => {
            commands::cmd_classify(spec, tol, format!("classify {}", spec.display()))
        }
        Command::Kernel { spec, points } => {
            let pts = match points {
                None => vec![(cdshift_core::C64::new(0.0, 0.0), cdshift_core::C64::new(0.0, 0.0))],
                Some(path) => match std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))
                    .and_then(|text| spec_io::parse_points(&text))
                {
                    Ok(p) => p,
                    Err(msg) => {
                        let mut r = Report::new(
                            format!("kernel {}", spec.display()),
                            String::new(),
                            tol,
                        );
                        r.results = serde_json::json!({ "error": msg });
                        r.finish(Exit::InputError);
                        print!("{}", if cli.human { r.render_human() } else { r.render_json() });
                        std::process::exit(Exit::InputError.code());
                    }
                },
            };
            commands::cmd_kernel(spec, pts, tol, format!("kernel {}", spec.display()))
        }
        Command::Realize {
            spec,
            n_max,
            out,
            blocks,
        } => commands::cmd_realize(
            spec,
            *n_max,
            out.as_deref(),
            *blocks,
            tol,
            format!("realize {} --n-max {}", spec.display(), n_max),
        ),
        Command::Verify {
            spec,
            seed,
            samples,
        } => commands::cmd_verify(
            spec,
            *seed,
            *samples,
            tol,
            format!("verify {} --seed {} --samples {}", spec.display(), seed, samples),
        ),
        Command::Canonical { spec } => {
            commands::cmd_canonical(spec, tol, format!("canonical {}", spec.display()))
        }
    };

    print!(
        "{}",
        if cli.human {
            report.render_human()
        } else {
            report.render_json()
        }
    );
    std::process::exit(report.exit_code);
}
