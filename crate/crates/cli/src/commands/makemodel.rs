//! `helm27 make-model`: build procedural velocity models.
//!
//! Three shapes cover the benchmark geometries: uniform wavespeed, a
//! linear ramp along y, and a uniform background with an embedded
//! axis-aligned box of contrasting wavespeed.

use super::ms;
use crate::manifest::RunManifest;
use crate::{parse_triple_usize, CliError, Ctx};
use clap::{Args, ValueEnum};
use helm27::model::{save_model_as, ModelError, VelocityModel};
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum ModelKind {
    /// Uniform wavespeed --c everywhere.
    Homogeneous,
    /// Wavespeed ramp from --c at y=0 to --c-end at the far y face.
    GradientY,
    /// Uniform --c background with a --c-body box from --box-lo to
    /// --box-hi (inclusive node ranges).
    Box,
}

#[derive(Args, Debug)]
pub struct MakeModelArgs {
    /// Model shape.
    #[arg(long, value_enum)]
    pub kind: ModelKind,

    /// Grid dimensions as nx,ny,nz (nodes).
    #[arg(long)]
    pub dims: String,

    /// Grid spacing in meters.
    #[arg(long)]
    pub h: f64,

    /// Background (or starting) wavespeed in m/s.
    #[arg(long)]
    pub c: f64,

    /// Final wavespeed for --kind gradient-y.
    #[arg(long)]
    pub c_end: Option<f64>,

    /// Body wavespeed for --kind box.
    #[arg(long)]
    pub c_body: Option<f64>,

    /// Inclusive lower corner of the box as i,j,k (nodes).
    #[arg(long)]
    pub box_lo: Option<String>,

    /// Inclusive upper corner of the box as i,j,k (nodes).
    #[arg(long)]
    pub box_hi: Option<String>,

    /// Output model path.
    #[arg(long, short)]
    pub out: PathBuf,
}

fn construct_err(e: ModelError) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn run(ctx: &Ctx, args: MakeModelArgs) -> Result<(), CliError> {
    let t0 = Instant::now();
    let [nx, ny, nz] = parse_triple_usize(&args.dims, "--dims")?;

    let (model, detail) = match args.kind {
        ModelKind::Homogeneous => (
            VelocityModel::homogeneous(nx, ny, nz, args.h, args.c).map_err(construct_err)?,
            json!({ "kind": "homogeneous" }),
        ),
        ModelKind::GradientY => {
            let c_end = args
                .c_end
                .ok_or_else(|| CliError::Usage("--kind gradient-y requires --c-end".into()))?;
            (
                VelocityModel::gradient_y(nx, ny, nz, args.h, args.c, c_end)
                    .map_err(construct_err)?,
                json!({ "kind": "gradient-y", "c_end": c_end }),
            )
        }
        ModelKind::Box => {
            let c_body = args
                .c_body
                .ok_or_else(|| CliError::Usage("--kind box requires --c-body".into()))?;
            let lo_s = args
                .box_lo
                .as_deref()
                .ok_or_else(|| CliError::Usage("--kind box requires --box-lo".into()))?;
            let hi_s = args
                .box_hi
                .as_deref()
                .ok_or_else(|| CliError::Usage("--kind box requires --box-hi".into()))?;
            let lo = parse_triple_usize(lo_s, "--box-lo")?;
            let hi = parse_triple_usize(hi_s, "--box-hi")?;
            for a in 0..3 {
                if lo[a] > hi[a] {
                    return Err(CliError::Usage(format!(
                        "--box-lo must not exceed --box-hi (axis {a}: {} > {})",
                        lo[a], hi[a]
                    )));
                }
            }
            let model = VelocityModel::homogeneous(nx, ny, nz, args.h, args.c)
                .map_err(construct_err)?
                .with_box(lo, hi, c_body);
            (
                model,
                json!({ "kind": "box", "c_body": c_body, "box_lo": lo, "box_hi": hi }),
            )
        }
    };

    let resolved = json!({
        "shape": detail,
        "dims": [nx, ny, nz],
        "h": args.h,
        "c": args.c,
        "out": args.out.display().to_string(),
    });
    let mut man = RunManifest::new(ctx, "make-model", resolved);
    let man_path = RunManifest::path_for(&args.out);

    save_model_as(&model, &args.out, &RunManifest::provenance(&man_path))
        .map_err(|e| CliError::Io(format!("cannot write model {}: {e}", args.out.display())))?;

    man.time("total_ms", ms(t0.elapsed()));
    man.output(&args.out);
    man.write(&man_path)?;

    println!(
        "wrote {} ({}x{}x{}, c in [{:.1}, {:.1}] m/s); manifest {}",
        args.out.display(),
        nx,
        ny,
        nz,
        model.c_min(),
        model.c_max(),
        man_path.display()
    );
    Ok(())
}
