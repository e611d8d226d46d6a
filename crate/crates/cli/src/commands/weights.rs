//! `helm27 weights`: fit stencil weight vectors and write a weight-table
//! CSV.
//!
//! Three modes: `single` fits one vector at one sampling ratio, `joint`
//! fits one compromise vector across several ratios, and `adaptive` fits
//! a full table over a uniform 1/G grid with smoothing across rows. The
//! single and joint modes write one-row tables; lookup clamps to the end
//! rows, so such a table applies its vector at every sampling ratio.

use super::{ms, resolve_angles, usage};
use crate::manifest::{self, RunManifest};
use crate::{CliError, Ctx};
use clap::{Args, ValueEnum};
use helm27::dispersion::{
    default_lambda, solve_weights_adaptive, solve_weights_joint, solve_weights_single, InvGGrid,
    WeightTable,
};
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum FitMode {
    /// One weight vector tuned to a single sampling ratio (--g).
    Single,
    /// One compromise vector fit jointly across several ratios (--gs).
    Joint,
    /// A full table over a uniform 1/G grid with row smoothing.
    Adaptive,
}

#[derive(Args, Debug)]
pub struct WeightsArgs {
    /// Fitting mode.
    #[arg(long, value_enum)]
    pub mode: FitMode,

    /// Sampling ratio (points per wavelength) for --mode single.
    #[arg(long)]
    pub g: Option<f64>,

    /// Comma-separated sampling ratios for --mode joint.
    #[arg(long, value_delimiter = ',')]
    pub gs: Vec<f64>,

    /// Smallest tabulated 1/G (adaptive mode; default 0.001).
    #[arg(long)]
    pub inv_g_min: Option<f64>,

    /// Largest tabulated 1/G (adaptive mode; default 0.4).
    #[arg(long)]
    pub inv_g_max: Option<f64>,

    /// Table step in 1/G (adaptive mode; default 0.001).
    #[arg(long)]
    pub step: Option<f64>,

    /// Smoothing weight coupling neighboring rows (adaptive mode;
    /// default chosen from the fit scale).
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Fitting polar angles in degrees (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub thetas_deg: Vec<f64>,

    /// Fitting azimuthal angles in degrees (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub phis_deg: Vec<f64>,

    /// Output CSV path.
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn run(ctx: &Ctx, args: WeightsArgs) -> Result<(), CliError> {
    let t0 = Instant::now();
    let fc = &ctx.file.weights;
    let angles = resolve_angles(
        &args.thetas_deg,
        &args.phis_deg,
        fc.thetas_deg.as_ref(),
        fc.phis_deg.as_ref(),
    )?;

    let (table, mode_name, fit_detail) = match args.mode {
        FitMode::Single => {
            let g = args
                .g
                .ok_or_else(|| CliError::Usage("--mode single requires --g".into()))?;
            let w = solve_weights_single(g, &angles).map_err(usage)?;
            let table = WeightTable::pinned(1.0 / g, &angles, w).map_err(usage)?;
            (table, "single", json!({ "g": g }))
        }
        FitMode::Joint => {
            if args.gs.is_empty() {
                return Err(CliError::Usage("--mode joint requires --gs".into()));
            }
            let w = solve_weights_joint(&args.gs, &angles).map_err(usage)?;
            let g_min = args.gs.iter().cloned().fold(f64::INFINITY, f64::min);
            let table = WeightTable::pinned(1.0 / g_min, &angles, w).map_err(usage)?;
            (table, "joint", json!({ "gs": args.gs }))
        }
        FitMode::Adaptive => {
            let grid = InvGGrid {
                min: args.inv_g_min.or(fc.inv_g_min).unwrap_or(0.001),
                max: args.inv_g_max.or(fc.inv_g_max).unwrap_or(0.4),
                step: args.step.or(fc.step).unwrap_or(0.001),
            };
            let lambda = match args.lambda.or(fc.lambda) {
                Some(l) => l,
                None => default_lambda(&grid, &angles).map_err(usage)?,
            };
            let table = solve_weights_adaptive(&grid, &angles, lambda).map_err(usage)?;
            (
                table,
                "adaptive",
                json!({
                    "inv_g_min": grid.min,
                    "inv_g_max": grid.max,
                    "step": grid.step,
                    "lambda": lambda,
                }),
            )
        }
    };
    let fit_ms = ms(t0.elapsed());

    let resolved = json!({
        "mode": mode_name,
        "fit": fit_detail,
        "thetas_deg": angles.thetas().iter().map(|r| r.to_degrees()).collect::<Vec<_>>(),
        "phis_deg": angles.phis().iter().map(|r| r.to_degrees()).collect::<Vec<_>>(),
        "out": args.out.display().to_string(),
    });
    let mut man = RunManifest::new(ctx, "weights", resolved);
    let man_path = RunManifest::path_for(&args.out);

    table
        .save_with_comment(&args.out, Some(&RunManifest::provenance(&man_path)))
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", args.out.display())))?;

    man.weight_table = Some(manifest::table_id(&args.out, &table)?);
    man.time("fit_ms", fit_ms);
    man.time("total_ms", ms(t0.elapsed()));
    man.output(&args.out);
    man.write(&man_path)?;

    println!(
        "wrote {} ({} rows); manifest {}",
        args.out.display(),
        table.rows().len(),
        man_path.display()
    );
    Ok(())
}
