//! `helm27 compare`: gain-weighted comparison of two fields.
//!
//! Prints the error decomposition on stdout as `key=value` pairs and can
//! write a JSON report plus axis profiles through the source for
//! plotting. The mask drops each field's absorbing padding and a small
//! ball around the source; when the two fields carry different padding,
//! the wider padding wins.

use super::{load_field_io, ms};
use crate::manifest::RunManifest;
use crate::{parse_source, CliError, Ctx};
use clap::Args;
use helm27::metrics::{
    axis_profile, error_metric, snap_to_field, write_profiles_csv_with_comment, Axis, Mask,
    MetricsError,
};
use serde_json::json;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Reference field file.
    pub reference: PathBuf,

    /// Test field file.
    pub test: PathBuf,

    /// Source position in meters, as x,y,z (defines the gain weights).
    #[arg(long)]
    pub source: String,

    /// Exclusion-ball radius around the source, in cells (default 2).
    #[arg(long)]
    pub ball: Option<f64>,

    /// Write the error report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Write x/y/z axis profiles through the source as CSV.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
}

fn metrics_err(e: MetricsError) -> CliError {
    match e {
        MetricsError::DegenerateReference(_) => CliError::Numerical(e.to_string()),
        MetricsError::Io { .. } => CliError::Io(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

pub fn run(ctx: &Ctx, args: CompareArgs) -> Result<(), CliError> {
    let t0 = Instant::now();
    let u_ref = load_field_io(&args.reference)?;
    let u_test = load_field_io(&args.test)?;
    let source = parse_source(&args.source, None)?;
    let ball = args.ball.or(ctx.file.compare.ball).unwrap_or(2.0);

    // Build the mask from whichever field carries the wider padding so
    // absorbing-layer nodes never enter the metric.
    let mask_field = if u_test.pad() > u_ref.pad() { &u_test } else { &u_ref };
    let mask = Mask::with_ball_radius(mask_field, &source, ball).map_err(metrics_err)?;
    let report = error_metric(&u_ref, &u_test, &source, &mask).map_err(metrics_err)?;

    println!(
        "err={:e} real={:e} imag={:e} masked_nodes={}",
        report.err, report.real_part, report.imag_part, report.masked_nodes
    );

    let primary = args.report.as_ref().or(args.profiles.as_ref());
    let Some(primary) = primary else {
        return Ok(()); // stdout-only run: nothing on disk, no manifest
    };
    let man_path = RunManifest::path_for(primary);
    let prov = RunManifest::provenance(&man_path);

    let resolved = json!({
        "reference": args.reference.display().to_string(),
        "test": args.test.display().to_string(),
        "source": args.source,
        "ball": ball,
        "report": args.report.as_ref().map(|p| p.display().to_string()),
        "profiles": args.profiles.as_ref().map(|p| p.display().to_string()),
    });
    let mut man = RunManifest::new(ctx, "compare", resolved);
    man.solver = Some(json!({
        "err": report.err,
        "real_part": report.real_part,
        "imag_part": report.imag_part,
        "masked_nodes": report.masked_nodes,
    }));

    if let Some(p) = &args.report {
        let mut value = serde_json::to_value(&report)
            .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))?;
        if let Some(obj) = value.as_object_mut() {
            obj.insert("manifest".into(), json!(prov));
        }
        let text = serde_json::to_string_pretty(&value)
            .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))?;
        std::fs::write(p, text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
        man.output(p);
    }

    if let Some(p) = &args.profiles {
        let through = snap_to_field(&source, &u_ref).map_err(metrics_err)?;
        let mut sections: Vec<(String, Vec<_>)> = Vec::new();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let r = axis_profile(&u_ref, axis, through, &source).map_err(metrics_err)?;
            let t = axis_profile(&u_test, axis, through, &source).map_err(metrics_err)?;
            sections.push((format!("reference_{}", axis.label()), r));
            sections.push((format!("test_{}", axis.label()), t));
        }
        let borrowed: Vec<(&str, &[_])> = sections
            .iter()
            .map(|(n, s)| (n.as_str(), s.as_slice()))
            .collect();
        write_profiles_csv_with_comment(p, Some(&prov), &borrowed).map_err(metrics_err)?;
        man.output(p);
    }

    man.time("total_ms", ms(t0.elapsed()));
    man.write(&man_path)?;
    Ok(())
}
