//! `helm27 reference`: compute reference fields for error measurement.
//!
//! `analytic` samples the free-space point-source solution (homogeneous
//! models only). `cbs` runs the convergent Born series with a spectral
//! Green's operator on an absorber-extended copy of the model, iterating
//! until the backward error of the Helmholtz residual reaches the
//! requested tolerance, and writes the field cropped back to the model
//! extent.

use super::{load_model_io, ms, save_field_io};
use crate::manifest::RunManifest;
use crate::{parse_source, CliError, Ctx};
use clap::{Args, ValueEnum};
use helm27::reference::{analytic_homogeneous, cbs_solve, CbsConfig, ReferenceError};
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RefKind {
    /// Closed-form free-space solution (homogeneous models only).
    Analytic,
    /// Convergent Born series with a spectral Green's operator.
    Cbs,
}

#[derive(Args, Debug)]
pub struct ReferenceArgs {
    /// Reference kind.
    #[arg(long, value_enum)]
    pub kind: RefKind,

    /// Input velocity-model file.
    #[arg(long)]
    pub model: PathBuf,

    /// Frequency in Hz.
    #[arg(long)]
    pub freq: f64,

    /// Point-source position in meters, as x,y,z.
    #[arg(long)]
    pub source: String,

    /// Complex source amplitude, as re or re,im (default 1).
    #[arg(long)]
    pub amplitude: Option<String>,

    /// Absorber extension in cells (cbs; default quarter-wavelength,
    /// at least 8).
    #[arg(long)]
    pub pad: Option<usize>,

    /// Backward-error tolerance (cbs; default 1e-12).
    #[arg(long)]
    pub tol: Option<f64>,

    /// Iteration cap (cbs; default 4000).
    #[arg(long)]
    pub max_iters: Option<usize>,

    /// Peak imaginary fraction of k-squared at the absorber edge (cbs;
    /// default 1.0).
    #[arg(long)]
    pub absorber_strength: Option<f64>,

    /// Safety factor on the contraction shift (cbs; default 1.05).
    #[arg(long)]
    pub epsilon_factor: Option<f64>,

    /// Output field path.
    #[arg(long, short)]
    pub out: PathBuf,
}

fn ref_err(e: ReferenceError) -> CliError {
    match e {
        ReferenceError::BadConfig(_) | ReferenceError::Model(_) => CliError::Usage(e.to_string()),
        ReferenceError::NonConvergence { .. } | ReferenceError::DegenerateSystem(_) => {
            CliError::Numerical(e.to_string())
        }
    }
}

pub fn run(ctx: &Ctx, args: ReferenceArgs) -> Result<(), CliError> {
    let t0 = Instant::now();
    let fc = &ctx.file.reference;
    let model = load_model_io(&args.model)?;
    let source = parse_source(&args.source, args.amplitude.as_deref())?;

    let (field, kind_name, detail, solver) = match args.kind {
        RefKind::Analytic => {
            if model.has_buoyancy() || model.c_min() != model.c_max() {
                return Err(CliError::Usage(
                    "the analytic reference requires a homogeneous constant-density model".into(),
                ));
            }
            let field = analytic_homogeneous(
                model.nx(),
                model.ny(),
                model.nz(),
                model.h(),
                model.c_min(),
                args.freq,
                &source,
            )
            .map_err(ref_err)?;
            (field, "analytic", json!({ "c0": model.c_min() }), None)
        }
        RefKind::Cbs => {
            let mut cfg = CbsConfig::defaults_for(&model, args.freq).map_err(ref_err)?;
            if let Some(p) = args.pad.or(fc.pad) {
                cfg.pad = p;
            }
            if let Some(t) = args.tol.or(fc.tol) {
                cfg.tol = t;
            }
            if let Some(m) = args.max_iters.or(fc.max_iters) {
                cfg.max_iters = m;
            }
            if let Some(a) = args.absorber_strength.or(fc.absorber_strength) {
                cfg.absorber_strength = a;
            }
            if let Some(e) = args.epsilon_factor.or(fc.epsilon_factor) {
                cfg.epsilon_factor = e;
            }
            let (field, stats) = cbs_solve(&model, args.freq, &source, &cfg).map_err(ref_err)?;
            let detail = json!({
                "pad": cfg.pad,
                "tol": cfg.tol,
                "max_iters": cfg.max_iters,
                "absorber_strength": cfg.absorber_strength,
                "epsilon_factor": cfg.epsilon_factor,
            });
            let solver = json!({
                "iterations": stats.iterations,
                "backward_error": stats.backward_error,
                "backward_history_len": stats.backward_history.len(),
                "wall_time_s": stats.wall_time.as_secs_f64(),
            });
            (field, "cbs", detail, Some(solver))
        }
    };

    let resolved = json!({
        "kind": kind_name,
        "model": args.model.display().to_string(),
        "freq": args.freq,
        "source": args.source,
        "amplitude": args.amplitude,
        "settings": detail,
        "out": args.out.display().to_string(),
    });
    let mut man = RunManifest::new(ctx, "reference", resolved);
    man.solver = solver;

    let man_path = RunManifest::path_for(&args.out);
    save_field_io(&field, &args.out, &RunManifest::provenance(&man_path))?;
    man.output(&args.out);
    man.time("total_ms", ms(t0.elapsed()));
    man.write(&man_path)?;

    println!(
        "wrote {} ({} reference); manifest {}",
        args.out.display(),
        kind_name,
        man_path.display()
    );
    Ok(())
}
