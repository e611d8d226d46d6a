//! `helm27 dispersion`: sample normalized phase-velocity curves for a
//! weight table.
//!
//! For each sampled 1/G the weights are looked up in the table exactly as
//! the assembler would, so the emitted curves describe the operator the
//! solver actually builds. Output goes to stdout as CSV, or to a file
//! (with a manifest) when --out is given.

use super::{load_table_io, ms, resolve_angles, usage};
use crate::manifest::{self, RunManifest};
use crate::{parse_g_range, CliError, Ctx};
use clap::Args;
use helm27::dispersion::dispersion_curve;
use serde_json::json;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args, Debug)]
pub struct DispersionArgs {
    /// Weight-table CSV to evaluate.
    #[arg(long)]
    pub weights: PathBuf,

    /// Sampling-ratio range "lo..hi" (inclusive) or a single value.
    #[arg(long)]
    pub g: String,

    /// Number of 1/G samples across the range (default 200).
    #[arg(long)]
    pub samples: Option<usize>,

    /// Evaluation polar angles in degrees (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub thetas_deg: Vec<f64>,

    /// Evaluation azimuthal angles in degrees (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub phis_deg: Vec<f64>,

    /// Output CSV path (omit to print to stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, args: DispersionArgs) -> Result<(), CliError> {
    let t0 = Instant::now();
    let fc = &ctx.file.dispersion;
    let table = load_table_io(&args.weights)?;
    let (g_lo, g_hi) = parse_g_range(&args.g)?;
    let samples = args.samples.or(fc.samples).unwrap_or(200);
    if samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let angles = resolve_angles(
        &args.thetas_deg,
        &args.phis_deg,
        fc.thetas_deg.as_ref(),
        fc.phis_deg.as_ref(),
    )?;

    // Sample uniformly in 1/G (the table's own axis), finest grid first.
    let inv_lo = 1.0 / g_hi;
    let inv_hi = 1.0 / g_lo;
    let inv_gs: Vec<f64> = if g_lo == g_hi || samples == 1 {
        vec![1.0 / g_lo]
    } else {
        (0..samples)
            .map(|i| inv_lo + (inv_hi - inv_lo) * i as f64 / (samples - 1) as f64)
            .collect()
    };

    let mut rows = Vec::new();
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    for &inv_g in &inv_gs {
        let w = table.lookup(1.0 / inv_g);
        for p in dispersion_curve(w, &[inv_g], &angles).map_err(usage)? {
            v_min = v_min.min(p.v_norm);
            v_max = v_max.max(p.v_norm);
            rows.push(p);
        }
    }

    let header = "inv_g,g,theta_deg,phi_deg,v_norm";
    let fmt_row = |p: &helm27::dispersion::DispersionPoint| {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            p.inv_g,
            1.0 / p.inv_g,
            p.theta_deg,
            p.phi_deg,
            p.v_norm
        )
    };

    match &args.out {
        None => {
            let stdout = std::io::stdout();
            let mut f = stdout.lock();
            let wrap = |e: std::io::Error| CliError::Io(format!("cannot write stdout: {e}"));
            writeln!(f, "{header}").map_err(wrap)?;
            for p in &rows {
                writeln!(f, "{}", fmt_row(p)).map_err(wrap)?;
            }
        }
        Some(out) => {
            let man_path = RunManifest::path_for(out);
            let prov = RunManifest::provenance(&man_path);
            let resolved = json!({
                "weights": args.weights.display().to_string(),
                "g_lo": g_lo,
                "g_hi": g_hi,
                "samples": inv_gs.len(),
                "thetas_deg": angles.thetas().iter().map(|r| r.to_degrees()).collect::<Vec<_>>(),
                "phis_deg": angles.phis().iter().map(|r| r.to_degrees()).collect::<Vec<_>>(),
                "out": out.display().to_string(),
            });
            let mut man = RunManifest::new(ctx, "dispersion", resolved);
            man.weight_table = Some(manifest::table_id(&args.weights, &table)?);

            let wrap =
                |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", out.display()));
            let mut f = std::io::BufWriter::new(std::fs::File::create(out).map_err(wrap)?);
            writeln!(f, "# {prov}").map_err(wrap)?;
            writeln!(f, "{header}").map_err(wrap)?;
            for p in &rows {
                writeln!(f, "{}", fmt_row(p)).map_err(wrap)?;
            }
            f.flush().map_err(wrap)?;

            man.output(out);
            man.time("total_ms", ms(t0.elapsed()));
            man.write(&man_path)?;
            println!(
                "wrote {} ({} rows; v_norm in [{:.6}, {:.6}]); manifest {}",
                out.display(),
                rows.len(),
                v_min,
                v_max,
                man_path.display()
            );
        }
    }
    Ok(())
}
