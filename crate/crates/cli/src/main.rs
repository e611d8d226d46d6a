//! `helm27`: command-line driver for frequency-domain acoustic wave
//! modeling on wavelength-adaptive 27-point stencils.
//!
//! Subcommands cover the full experiment loop: fit stencil weights
//! (`weights`), build procedural velocity models (`make-model`), run the
//! sparse frequency-domain solver (`solve`), compute analytic or spectral
//! reference solutions (`reference`), compare fields with the
//! gain-weighted error metric (`compare`), and sample dispersion curves
//! for a weight table (`dispersion`).
//!
//! Every file-producing run writes a `<output>.manifest.json` recording
//! the resolved configuration, content hashes, timings, and solver
//! statistics; output files point back at their manifest.
//!
//! Exit codes: 0 success, 2 usage error, 3 numerical failure
//! (non-convergence or breakdown), 4 I/O failure.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

/// Process-level error carrying the documented exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad flag combinations, or invalid user-supplied values.
    Usage(String),
    /// The computation failed: non-convergence, breakdown, degenerate
    /// inputs discovered mid-run.
    Numerical(String),
    /// Missing, unreadable, unwritable, or corrupt files.
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "helm27",
    version,
    about = "Frequency-domain acoustic Helmholtz modeling on wavelength-adaptive 27-point stencils",
    propagate_version = true
)]
pub struct Cli {
    /// TOML config file supplying defaults; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for parallel sections (0 = one per core).
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    threads: usize,

    /// Force serial execution for bitwise-reproducible runs.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit stencil weights and write a weight-table CSV.
    Weights(commands::weights::WeightsArgs),
    /// Build a procedural velocity model file.
    MakeModel(commands::makemodel::MakeModelArgs),
    /// Assemble and solve one frequency-domain problem; write the field.
    Solve(commands::solve::SolveArgs),
    /// Compute an analytic or spectral reference field.
    Reference(commands::reference::ReferenceArgs),
    /// Compare two fields with the gain-weighted error metric.
    Compare(commands::compare::CompareArgs),
    /// Sample normalized phase-velocity curves for a weight table.
    Dispersion(commands::dispersion::DispersionArgs),
}

/// Global invocation context shared by all subcommands.
pub struct Ctx {
    pub file: config::FileConfig,
    pub config_path: Option<PathBuf>,
    pub threads: usize,
    pub deterministic: bool,
    pub argv: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = if cli.deterministic { 1 } else { cli.threads };
    if threads > 0 {
        // Only the first global-pool build wins; later calls are no-ops.
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let file = match &cli.config {
        Some(p) => config::FileConfig::load(p)?,
        None => config::FileConfig::default(),
    };
    let ctx = Ctx {
        file,
        config_path: cli.config,
        threads: cli.threads,
        deterministic: cli.deterministic,
        argv: std::env::args().collect(),
    };
    match cli.command {
        Command::Weights(a) => commands::weights::run(&ctx, a),
        Command::MakeModel(a) => commands::makemodel::run(&ctx, a),
        Command::Solve(a) => commands::solve::run(&ctx, a),
        Command::Reference(a) => commands::reference::run(&ctx, a),
        Command::Compare(a) => commands::compare::run(&ctx, a),
        Command::Dispersion(a) => commands::dispersion::run(&ctx, a),
    }
}

/// Parses `"x,y,z"` into three floats.
pub(crate) fn parse_triple_f64(s: &str, flag: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("{flag} expects x,y,z; got {s:?}")));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p
            .trim()
            .parse::<f64>()
            .map_err(|e| CliError::Usage(format!("{flag}: bad number {p:?}: {e}")))?;
    }
    Ok(out)
}

/// Parses `"nx,ny,nz"` into three node counts.
pub(crate) fn parse_triple_usize(s: &str, flag: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("{flag} expects a,b,c; got {s:?}")));
    }
    let mut out = [0usize; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        *slot = p
            .trim()
            .parse::<usize>()
            .map_err(|e| CliError::Usage(format!("{flag}: bad integer {p:?}: {e}")))?;
    }
    Ok(out)
}

/// Parses `"re"` or `"re,im"` into a complex amplitude.
pub(crate) fn parse_complex(s: &str, flag: &str) -> Result<Complex64, CliError> {
    let bad = |p: &str, e: std::num::ParseFloatError| {
        CliError::Usage(format!("{flag}: bad number {p:?}: {e}"))
    };
    match s.split_once(',') {
        Some((re, im)) => Ok(Complex64::new(
            re.trim().parse().map_err(|e| bad(re, e))?,
            im.trim().parse().map_err(|e| bad(im, e))?,
        )),
        None => Ok(Complex64::new(
            s.trim().parse().map_err(|e| bad(s, e))?,
            0.0,
        )),
    }
}

/// Builds a point source from a `"x,y,z"` position (meters) and an
/// optional complex amplitude (default 1).
pub(crate) fn parse_source(
    position: &str,
    amplitude: Option<&str>,
) -> Result<helm27::model::SourceSpec, CliError> {
    let p = parse_triple_f64(position, "--source")?;
    let a = match amplitude {
        Some(s) => parse_complex(s, "--amplitude")?,
        None => Complex64::new(1.0, 0.0),
    };
    Ok(helm27::model::SourceSpec::new(p, a))
}

/// Parses a sampling-ratio range `"4..10"` (inclusive) or a single `"4"`.
pub(crate) fn parse_g_range(s: &str) -> Result<(f64, f64), CliError> {
    let bad = |p: &str, e: std::num::ParseFloatError| {
        CliError::Usage(format!("--g: bad number {p:?}: {e}"))
    };
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (
            a.trim().parse::<f64>().map_err(|e| bad(a, e))?,
            b.trim().parse::<f64>().map_err(|e| bad(b, e))?,
        ),
        None => {
            let g = s.trim().parse::<f64>().map_err(|e| bad(s, e))?;
            (g, g)
        }
    };
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
        return Err(CliError::Usage(format!(
            "--g expects a positive value or an increasing range, got {s:?}"
        )));
    }
    Ok((lo, hi))
}
