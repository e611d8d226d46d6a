//! `helm27 solve`: assemble one frequency-domain problem and solve it.
//!
//! The stencil variant picks how weights drive the operator rows: `g4`
//! and `gm` use one fixed vector everywhere (fit internally by default,
//! or taken from a one-row table), `ga` looks weights up per node from a
//! table, and `gam` additionally averages the looked-up weights over each
//! row's 27-node neighborhood. Non-convergence still writes the best
//! iterate and its manifest, then exits with the numerical-failure code
//! so scripts can tell the difference.

use super::{load_model_io, load_table_io, ms, save_field_io, usage};
use crate::manifest::{self, RunManifest};
use crate::{parse_source, CliError, Ctx};
use clap::{Args, ValueEnum};
use helm27::assembly::{assemble, build_rhs, MassMode, StencilVariant};
use helm27::dispersion::{
    solve_weights_joint, solve_weights_single, AngleGrid, WeightTable, WeightVector,
};
use helm27::linsolve::{solve, Method, Precond, SolveError, SolverConfig};
use helm27::pml::PmlProfile;
use serde_json::json;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// Fixed weights tuned to G = 4.
    G4,
    /// Fixed compromise weights tuned jointly over G = 4, 6, 8, 10.
    Gm,
    /// Adaptive: per-node table lookup at the local sampling ratio.
    Ga,
    /// Adaptive: table lookup averaged over each row's neighborhood.
    Gam,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum MethodArg {
    /// Restarted GMRES.
    Gmres,
    /// BiCGSTAB.
    Bicgstab,
    /// Banded LU factorization (small grids only).
    Direct,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum PrecondArg {
    /// Right diagonal (Jacobi) scaling.
    Jacobi,
    /// Zero-fill incomplete LU; fewer iterations on heterogeneous grids.
    Ilu0,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum MassModeArg {
    /// Mass term samples 1/kappa at each contributing node.
    Heterogeneous,
    /// Mass term samples 1/kappa at the collocation node only.
    Collocation,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
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

    /// Stencil variant.
    #[arg(long, value_enum)]
    pub variant: VariantArg,

    /// Weight-table CSV. Required for ga/gam; optional one-row override
    /// for g4/gm.
    #[arg(long)]
    pub weights: Option<PathBuf>,

    /// Absorbing-layer thickness in cells (default 12).
    #[arg(long)]
    pub pml: Option<usize>,

    /// Target boundary reflection coefficient (default 1e-3).
    #[arg(long)]
    pub r_coeff: Option<f64>,

    /// Mass lumping mode (default heterogeneous).
    #[arg(long, value_enum)]
    pub mass_mode: Option<MassModeArg>,

    /// Krylov/direct method (default gmres).
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,

    /// Krylov right preconditioner (default jacobi).
    #[arg(long, value_enum)]
    pub precond: Option<PrecondArg>,

    /// GMRES restart length (default 150).
    #[arg(long)]
    pub restart: Option<usize>,

    /// Relative residual tolerance (default 1e-5).
    #[arg(long)]
    pub tol: Option<f64>,

    /// Iteration cap (default 200000).
    #[arg(long)]
    pub max_iter: Option<usize>,

    /// Memory cap in bytes for the direct factorization (default 3 GiB).
    #[arg(long)]
    pub memory_cap_bytes: Option<usize>,

    /// Crop the absorbing padding off the saved field.
    #[arg(long)]
    pub crop: bool,

    /// Also write the residual history as CSV.
    #[arg(long)]
    pub residual_csv: Option<PathBuf>,

    /// Output field path.
    #[arg(long, short)]
    pub out: PathBuf,
}

fn solve_err(e: SolveError) -> CliError {
    match e {
        SolveError::BadConfig(_) | SolveError::DimensionMismatch { .. } => {
            CliError::Usage(e.to_string())
        }
        SolveError::Breakdown { .. } | SolveError::MemoryCap { .. } | SolveError::Field(_) => {
            CliError::Numerical(e.to_string())
        }
    }
}

/// Resolves an enum-valued setting: flag wins, else config-file string,
/// else default.
fn resolve_enum<T: ValueEnum>(
    flag: Option<T>,
    file: Option<&str>,
    default: T,
    key: &str,
) -> Result<T, CliError> {
    match (flag, file) {
        (Some(v), _) => Ok(v),
        (None, Some(s)) => T::from_str(s, true)
            .map_err(|e| CliError::Usage(format!("config {key} = {s:?}: {e}"))),
        (None, None) => Ok(default),
    }
}

pub fn run(ctx: &Ctx, args: SolveArgs) -> Result<(), CliError> {
    let t0 = Instant::now();
    let fc = &ctx.file.solve;

    let model = load_model_io(&args.model)?;
    let source = parse_source(&args.source, args.amplitude.as_deref())?;
    let pml = PmlProfile::new(
        args.pml.or(fc.pml).unwrap_or(12),
        args.r_coeff.or(fc.r_coeff).unwrap_or(PmlProfile::DEFAULT_R_COEFF),
    )
    .map_err(usage)?;
    let mass = match resolve_enum(
        args.mass_mode,
        fc.mass_mode.as_deref(),
        MassModeArg::Heterogeneous,
        "mass_mode",
    )? {
        MassModeArg::Heterogeneous => MassMode::HeterogeneousKappa,
        MassModeArg::Collocation => MassMode::CollocationKappa,
    };

    // Weight resolution: adaptive variants need a table; fixed variants
    // fit their vector internally unless a one-row table overrides it.
    let weights_path = args
        .weights
        .clone()
        .or_else(|| fc.weights.as_ref().map(PathBuf::from));
    let mut fixed_w: Option<WeightVector> = None;
    let mut table: Option<WeightTable> = None;
    let mut table_for_id: Option<(PathBuf, WeightTable)> = None;
    match args.variant {
        VariantArg::G4 | VariantArg::Gm => {
            if let Some(p) = &weights_path {
                let t = load_table_io(p)?;
                if t.rows().len() != 1 {
                    return Err(CliError::Usage(format!(
                        "fixed variants take a one-row weight table; {} has {} rows",
                        p.display(),
                        t.rows().len()
                    )));
                }
                fixed_w = Some(t.rows()[0]);
                table_for_id = Some((p.clone(), t));
            } else {
                let angles = AngleGrid::default_fit();
                fixed_w = Some(match args.variant {
                    VariantArg::G4 => solve_weights_single(4.0, &angles).map_err(usage)?,
                    _ => solve_weights_joint(&[4.0, 6.0, 8.0, 10.0], &angles).map_err(usage)?,
                });
            }
        }
        VariantArg::Ga | VariantArg::Gam => {
            let p = weights_path.as_ref().ok_or_else(|| {
                CliError::Usage("adaptive variants (ga, gam) require --weights TABLE.csv".into())
            })?;
            let t = load_table_io(p)?;
            table_for_id = Some((p.clone(), t.clone()));
            table = Some(t);
        }
    }
    let variant = match args.variant {
        VariantArg::G4 => StencilVariant::G4(fixed_w.as_ref().expect("set above")),
        VariantArg::Gm => StencilVariant::Gm(fixed_w.as_ref().expect("set above")),
        VariantArg::Ga => StencilVariant::Ga(table.as_ref().expect("set above")),
        VariantArg::Gam => StencilVariant::Gam(table.as_ref().expect("set above")),
    };

    let t_asm = Instant::now();
    let op = assemble(&model, args.freq, &pml, variant, mass).map_err(usage)?;
    let asm_ms = ms(t_asm.elapsed());
    let rhs = build_rhs(&model, &pml, &source).map_err(usage)?;

    let method = resolve_enum(args.method, fc.method.as_deref(), MethodArg::Gmres, "method")?;
    let precond =
        resolve_enum(args.precond, fc.precond.as_deref(), PrecondArg::Jacobi, "precond")?;
    let cfg = SolverConfig {
        method: match method {
            MethodArg::Gmres => Method::Gmres {
                restart: args.restart.or(fc.restart).unwrap_or(150),
            },
            MethodArg::Bicgstab => Method::BiCgStab,
            MethodArg::Direct => Method::DirectBanded,
        },
        precond: match precond {
            PrecondArg::Jacobi => Precond::Jacobi,
            PrecondArg::Ilu0 => Precond::Ilu0,
        },
        rel_tol: args.tol.or(fc.tol).unwrap_or(1e-5),
        max_iter: args.max_iter.or(fc.max_iter).unwrap_or(200_000),
        memory_cap_bytes: args.memory_cap_bytes.or(fc.memory_cap_bytes).unwrap_or(3 << 30),
    };

    let t_solve = Instant::now();
    let (field, stats) = solve(&op, &rhs, &cfg).map_err(solve_err)?;
    let solve_ms = ms(t_solve.elapsed());

    let resolved = json!({
        "model": args.model.display().to_string(),
        "freq": args.freq,
        "source": args.source,
        "amplitude": args.amplitude,
        "variant": variant.tag(),
        "weights": weights_path.as_ref().map(|p| p.display().to_string()),
        "pml": pml.npml(),
        "r_coeff": pml.r_coeff(),
        "mass_mode": match mass {
            MassMode::HeterogeneousKappa => "heterogeneous",
            MassMode::CollocationKappa => "collocation",
        },
        "method": stats.method,
        "precond": match cfg.precond {
            Precond::Jacobi => "jacobi",
            Precond::Ilu0 => "ilu0",
        },
        "rel_tol": cfg.rel_tol,
        "max_iter": cfg.max_iter,
        "memory_cap_bytes": cfg.memory_cap_bytes,
        "crop": args.crop,
        "out": args.out.display().to_string(),
    });
    let mut man = RunManifest::new(ctx, "solve", resolved);
    if let Some((p, t)) = &table_for_id {
        man.weight_table = Some(manifest::table_id(p, t)?);
    }
    man.solver = Some(json!({
        "method": stats.method,
        "iterations": stats.iterations,
        "converged": stats.converged,
        "final_residual": stats.final_residual,
        "wall_time_s": stats.wall_time.as_secs_f64(),
        "residual_history_len": stats.residual_history.len(),
        "unknowns": op.n(),
        "nonzeros": op.nnz(),
        "table_clamps": op.table_clamp_count(),
    }));

    let man_path = RunManifest::path_for(&args.out);
    let prov = RunManifest::provenance(&man_path);
    let out_field = if args.crop { field.crop_to_interior() } else { field };
    save_field_io(&out_field, &args.out, &prov)?;
    man.output(&args.out);

    if let Some(p) = &args.residual_csv {
        let wrap = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", p.display()));
        let mut f = std::io::BufWriter::new(std::fs::File::create(p).map_err(wrap)?);
        writeln!(f, "# {prov}").map_err(wrap)?;
        writeln!(f, "iteration,relative_residual").map_err(wrap)?;
        for (i, r) in stats.residual_history.iter().enumerate() {
            writeln!(f, "{},{:.17e}", i + 1, r).map_err(wrap)?;
        }
        f.flush().map_err(wrap)?;
        man.output(p);
    }

    man.time("assemble_ms", asm_ms);
    man.time("solve_ms", solve_ms);
    man.time("total_ms", ms(t0.elapsed()));
    man.write(&man_path)?;

    println!(
        "solved {} unknowns ({} nonzeros) with {}: {} iterations, residual {:.3e}, converged={}",
        op.n(),
        op.nnz(),
        stats.method,
        stats.iterations,
        stats.final_residual,
        stats.converged
    );
    println!("wrote {}; manifest {}", args.out.display(), man_path.display());

    if !stats.converged {
        return Err(CliError::Numerical(format!(
            "solver stopped at relative residual {:.3e} after {} iterations without reaching {:.1e} \
             (best iterate written to {})",
            stats.final_residual,
            stats.iterations,
            cfg.rel_tol,
            args.out.display()
        )));
    }
    Ok(())
}
