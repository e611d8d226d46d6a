//! Gain-weighted field comparison: the distance-weighted relative l1
//! error used to score solver output against a reference field, plus
//! axis-aligned profile extraction for plotting.
//!
//! The weight grows linearly with distance from the source, balancing
//! the geometric 1/r amplitude decay so that far-field mismatch counts
//! as much as near-field mismatch.

use crate::model::{ComplexField, SourceSpec};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("field dimensions differ: reference {0:?}, test {1:?}")]
    DimensionMismatch([usize; 3], [usize; 3]),
    #[error("mask dimensions {0:?} do not match field dimensions {1:?}")]
    MaskMismatch([usize; 3], [usize; 3]),
    #[error("grid spacing differs: reference {0} m, test {1} m")]
    SpacingMismatch(f64, f64),
    #[error("source position {0:?} m falls outside the field interior")]
    SourceOutsideField([f64; 3]),
    #[error("degenerate reference field: {0} part is zero over the unmasked nodes")]
    DegenerateReference(&'static str),
    #[error("no nodes survive the mask")]
    EmptyMask,
    #[error("profile point {0:?} is out of bounds for dims {1:?}")]
    ProfileOutOfBounds([usize; 3], [usize; 3]),
    #[error("failed writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Snaps a source to the nearest node of `field`'s interior and returns
/// it in whole-grid coordinates (absorbing padding included).
pub fn snap_to_field(
    source: &SourceSpec,
    field: &ComplexField,
) -> Result<[usize; 3], MetricsError> {
    let pad = field.pad();
    let dims = [field.nx(), field.ny(), field.nz()];
    let mut node = [0usize; 3];
    for a in 0..3 {
        let t = source.position[a] / field.h();
        if !t.is_finite() {
            return Err(MetricsError::SourceOutsideField(source.position));
        }
        let i = t.round();
        let interior = (dims[a] - 2 * pad) as f64;
        if i < 0.0 || i > interior - 1.0 {
            return Err(MetricsError::SourceOutsideField(source.position));
        }
        node[a] = i as usize + pad;
    }
    Ok(node)
}

/// Comparison mask: which nodes participate in the error metric.
#[derive(Clone, Debug)]
pub struct Mask {
    dims: [usize; 3],
    keep: Vec<bool>,
    excluded: usize,
}

impl Mask {
    /// Standard mask for a field: drops every absorbing-boundary node
    /// (the field's own padding) and a 2-cell Euclidean ball around the
    /// snapped source node.
    pub fn for_field(field: &ComplexField, source: &SourceSpec) -> Result<Self, MetricsError> {
        Self::with_ball_radius(field, source, 2.0)
    }

    /// Same as [`Mask::for_field`] with an explicit exclusion radius in
    /// cells.
    pub fn with_ball_radius(
        field: &ComplexField,
        source: &SourceSpec,
        radius_cells: f64,
    ) -> Result<Self, MetricsError> {
        let src = snap_to_field(source, field)?;
        let (nx, ny, nz) = (field.nx(), field.ny(), field.nz());
        let pad = field.pad();
        let r2 = radius_cells * radius_cells;
        let mut keep = Vec::with_capacity(nx * ny * nz);
        let mut excluded = 0usize;
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let in_pad = i < pad
                        || i >= nx - pad
                        || j < pad
                        || j >= ny - pad
                        || k < pad
                        || k >= nz - pad;
                    let dx = i as f64 - src[0] as f64;
                    let dy = j as f64 - src[1] as f64;
                    let dz = k as f64 - src[2] as f64;
                    let near_source = dx * dx + dy * dy + dz * dz <= r2;
                    let keep_node = !(in_pad || near_source);
                    if !keep_node {
                        excluded += 1;
                    }
                    keep.push(keep_node);
                }
            }
        }
        if excluded == keep.len() {
            return Err(MetricsError::EmptyMask);
        }
        Ok(Mask { dims: [nx, ny, nz], keep, excluded })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Number of nodes removed from the comparison.
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn keeps(&self, idx: usize) -> bool {
        self.keep[idx]
    }
}

/// Result of a gain-weighted comparison. `err` is the headline number:
/// the sum of the real-part and imaginary-part relative errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorReport {
    pub err: f64,
    pub real_part: f64,
    pub imag_part: f64,
    /// Nodes excluded from the comparison (absorbing boundary plus the
    /// ball around the source).
    pub masked_nodes: usize,
}

/// Gain-weighted relative l1 error of `u_test` against `u_ref`:
///
///   err = Σ w·|Re Δ| / Σ w·|Re u_ref|  +  Σ w·|Im Δ| / Σ w·|Im u_ref|
///
/// summed over unmasked nodes, with w the Euclidean distance in meters
/// from the node to the snapped source node. Runs as a sequential
/// reduction, so results are bit-stable for fixed inputs.
pub fn error_metric(
    u_ref: &ComplexField,
    u_test: &ComplexField,
    source: &SourceSpec,
    mask: &Mask,
) -> Result<ErrorReport, MetricsError> {
    let rd = [u_ref.nx(), u_ref.ny(), u_ref.nz()];
    let td = [u_test.nx(), u_test.ny(), u_test.nz()];
    if rd != td {
        return Err(MetricsError::DimensionMismatch(rd, td));
    }
    if mask.dims != rd {
        return Err(MetricsError::MaskMismatch(mask.dims, rd));
    }
    if u_ref.h() != u_test.h() {
        return Err(MetricsError::SpacingMismatch(u_ref.h(), u_test.h()));
    }
    let src = snap_to_field(source, u_ref)?;
    let h = u_ref.h();
    let (nx, ny, nz) = (rd[0], rd[1], rd[2]);

    let mut num_re = 0.0;
    let mut den_re = 0.0;
    let mut num_im = 0.0;
    let mut den_im = 0.0;
    let rv = u_ref.values();
    let tv = u_test.values();
    let mut idx = 0usize;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                if mask.keep[idx] {
                    let dx = i as f64 - src[0] as f64;
                    let dy = j as f64 - src[1] as f64;
                    let dz = k as f64 - src[2] as f64;
                    let w = h * (dx * dx + dy * dy + dz * dz).sqrt();
                    let d = tv[idx] - rv[idx];
                    num_re += w * d.re.abs();
                    den_re += w * rv[idx].re.abs();
                    num_im += w * d.im.abs();
                    den_im += w * rv[idx].im.abs();
                }
                idx += 1;
            }
        }
    }
    if den_re == 0.0 {
        return Err(MetricsError::DegenerateReference("real"));
    }
    if den_im == 0.0 {
        return Err(MetricsError::DegenerateReference("imaginary"));
    }
    let real_part = num_re / den_re;
    let imag_part = num_im / den_im;
    Ok(ErrorReport {
        err: real_part + imag_part,
        real_part,
        imag_part,
        masked_nodes: mask.excluded,
    })
}

/// Writes an error report as pretty JSON.
pub fn write_report(path: &Path, report: &ErrorReport) -> Result<(), MetricsError> {
    let text = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    std::fs::write(path, text).map_err(|e| MetricsError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// One node of an axis-aligned profile. `gain_corrected` is the
/// magnitude multiplied by the distance to the source, flattening the
/// geometric spreading so arrivals at different ranges are comparable.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileSample {
    pub index: usize,
    pub position_m: f64,
    pub distance_m: f64,
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
    pub gain_corrected: f64,
}

/// Extracts the field values along a grid line parallel to `axis`
/// passing through `through` (whole-grid coordinates).
pub fn axis_profile(
    field: &ComplexField,
    axis: Axis,
    through: [usize; 3],
    source: &SourceSpec,
) -> Result<Vec<ProfileSample>, MetricsError> {
    let dims = [field.nx(), field.ny(), field.nz()];
    for a in 0..3 {
        if through[a] >= dims[a] {
            return Err(MetricsError::ProfileOutOfBounds(through, dims));
        }
    }
    let src = snap_to_field(source, field)?;
    let h = field.h();
    let ax = axis.index();
    let mut out = Vec::with_capacity(dims[ax]);
    for q in 0..dims[ax] {
        let mut node = through;
        node[ax] = q;
        let idx = (node[0] * dims[1] + node[1]) * dims[2] + node[2];
        let v = field.values()[idx];
        let dx = node[0] as f64 - src[0] as f64;
        let dy = node[1] as f64 - src[1] as f64;
        let dz = node[2] as f64 - src[2] as f64;
        let dist = h * (dx * dx + dy * dy + dz * dz).sqrt();
        out.push(ProfileSample {
            index: q,
            position_m: q as f64 * h,
            distance_m: dist,
            re: v.re,
            im: v.im,
            magnitude: v.norm(),
            gain_corrected: v.norm() * dist,
        });
    }
    Ok(out)
}

/// Writes one or more named profiles as a single CSV with a `field`
/// discriminator column.
pub fn write_profiles_csv(
    path: &Path,
    profiles: &[(&str, &[ProfileSample])],
) -> Result<(), MetricsError> {
    write_profiles_csv_with_comment(path, None, profiles)
}

/// [`write_profiles_csv`] with a leading `#` comment line, typically a
/// pointer to the run manifest that produced the file.
pub fn write_profiles_csv_with_comment(
    path: &Path,
    comment: Option<&str>,
    profiles: &[(&str, &[ProfileSample])],
) -> Result<(), MetricsError> {
    let wrap = |e: std::io::Error| MetricsError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(wrap)?);
    if let Some(c) = comment {
        writeln!(f, "# {}", c.replace(['\r', '\n'], " ")).map_err(wrap)?;
    }
    writeln!(
        f,
        "field,index,position_m,distance_m,re,im,magnitude,gain_corrected"
    )
    .map_err(wrap)?;
    for (name, samples) in profiles {
        for s in *samples {
            writeln!(
                f,
                "{name},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                s.index, s.position_m, s.distance_m, s.re, s.im, s.magnitude, s.gain_corrected
            )
            .map_err(wrap)?;
        }
    }
    f.flush().map_err(wrap)
}
