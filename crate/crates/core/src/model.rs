//! Velocity models, complex pressure fields, grid geometry, and file I/O.
//!
//! Grids are uniform Cartesian with z-fastest linear ordering:
//! `index = (ix·ny + iy)·nz + iz`. Model dims describe the interior
//! (physical) region; absorbing-layer padding is added at assembly time
//! and recorded on fields. Files are raw little-endian 32-bit floats with
//! a JSON sidecar, so round-trips are byte-identical.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Errors from model/field construction and file I/O.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("grid must be at least 3 nodes per axis, got {0}x{1}x{2}")]
    GridTooSmall(usize, usize, usize),
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("value grid holds {got} entries, dims {nx}x{ny}x{nz} require {want}")]
    LengthMismatch { got: usize, want: usize, nx: usize, ny: usize, nz: usize },
    #[error("wavespeed must be positive and finite, found {value} at node ({i},{j},{k})")]
    BadWavespeed { value: f32, i: usize, j: usize, k: usize },
    #[error("buoyancy must be positive and finite, found {value} at node ({i},{j},{k})")]
    BadBuoyancy { value: f32, i: usize, j: usize, k: usize },
    #[error("frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("non-finite field value {value} at node ({i},{j},{k})")]
    NonFiniteField { value: Complex64, i: usize, j: usize, k: usize },
    #[error("source at {0:?} m snaps outside the interior region")]
    SourceOutsideInterior([f64; 3]),
    #[error("source amplitude must be finite")]
    BadAmplitude,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: sidecar is not valid JSON: {source}")]
    BadSidecar { path: PathBuf, source: serde_json::Error },
    #[error("{path}: payload holds {got} values, header declares {want}")]
    PayloadSizeMismatch { path: PathBuf, got: usize, want: usize },
    #[error("{path}: expected kind {want:?}, file is {got:?}")]
    WrongKind { path: PathBuf, got: String, want: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io { path: path.to_path_buf(), source }
}

/// Wavespeed (and optional buoyancy) sampled on the interior grid.
///
/// Wavespeed `c` is in m/s; buoyancy `b = 1/ρ` in (kg/m³)⁻¹ defaults to 1
/// everywhere, which makes the bulk modulus `κ = c²/b` pointwise
/// recoverable. Values are stored as `f32` to match the file format, so
/// save/load round-trips are bit-exact.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityModel {
    nx: usize,
    ny: usize,
    nz: usize,
    h: f64,
    c: Vec<f32>,
    b: Option<Vec<f32>>,
}

impl VelocityModel {
    /// Builds a constant-density model from a wavespeed grid
    /// (z-fastest ordering).
    pub fn new(nx: usize, ny: usize, nz: usize, h: f64, c: Vec<f32>) -> Result<Self, ModelError> {
        Self::build(nx, ny, nz, h, c, None)
    }

    /// Builds a model with an explicit buoyancy grid.
    pub fn with_buoyancy(
        nx: usize,
        ny: usize,
        nz: usize,
        h: f64,
        c: Vec<f32>,
        b: Vec<f32>,
    ) -> Result<Self, ModelError> {
        Self::build(nx, ny, nz, h, c, Some(b))
    }

    fn build(
        nx: usize,
        ny: usize,
        nz: usize,
        h: f64,
        c: Vec<f32>,
        b: Option<Vec<f32>>,
    ) -> Result<Self, ModelError> {
        if nx < 3 || ny < 3 || nz < 3 {
            return Err(ModelError::GridTooSmall(nx, ny, nz));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(ModelError::BadSpacing(h));
        }
        let want = nx * ny * nz;
        if c.len() != want {
            return Err(ModelError::LengthMismatch { got: c.len(), want, nx, ny, nz });
        }
        if let Some(b) = &b {
            if b.len() != want {
                return Err(ModelError::LengthMismatch { got: b.len(), want, nx, ny, nz });
            }
        }
        let model = VelocityModel { nx, ny, nz, h, c, b };
        for (idx, &v) in model.c.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                let (i, j, k) = model.coords(idx);
                return Err(ModelError::BadWavespeed { value: v, i, j, k });
            }
        }
        if let Some(b) = &model.b {
            for (idx, &v) in b.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    let (i, j, k) = model.coords(idx);
                    return Err(ModelError::BadBuoyancy { value: v, i, j, k });
                }
            }
        }
        Ok(model)
    }

    /// Constant-wavespeed model.
    pub fn homogeneous(
        nx: usize,
        ny: usize,
        nz: usize,
        h: f64,
        c0: f64,
    ) -> Result<Self, ModelError> {
        Self::new(nx, ny, nz, h, vec![c0 as f32; nx * ny * nz])
    }

    /// Model with wavespeed varying linearly along y from `c_start` at
    /// `j = 0` to `c_end` at `j = ny − 1`.
    pub fn gradient_y(
        nx: usize,
        ny: usize,
        nz: usize,
        h: f64,
        c_start: f64,
        c_end: f64,
    ) -> Result<Self, ModelError> {
        let mut c = vec![0.0f32; nx * ny * nz];
        for i in 0..nx {
            for j in 0..ny {
                let cj = c_start + (c_end - c_start) * j as f64 / (ny - 1) as f64;
                for k in 0..nz {
                    c[(i * ny + j) * nz + k] = cj as f32;
                }
            }
        }
        Self::new(nx, ny, nz, h, c)
    }

    /// Returns a copy with the axis-aligned box `lo..=hi` (inclusive node
    /// ranges, clipped to the grid) set to `c_body`. Used to embed fast
    /// bodies in a slower background.
    pub fn with_box(mut self, lo: [usize; 3], hi: [usize; 3], c_body: f64) -> Self {
        for i in lo[0]..=hi[0].min(self.nx - 1) {
            for j in lo[1]..=hi[1].min(self.ny - 1) {
                for k in lo[2]..=hi[2].min(self.nz - 1) {
                    let idx = self.idx(i, j, k);
                    self.c[idx] = c_body as f32;
                }
            }
        }
        self
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    /// Grid spacing in meters.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least 3x3x3
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }

    fn coords(&self, idx: usize) -> (usize, usize, usize) {
        (idx / (self.ny * self.nz), (idx / self.nz) % self.ny, idx % self.nz)
    }

    /// Wavespeed at an interior node.
    #[inline]
    pub fn c_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[self.idx(i, j, k)] as f64
    }

    /// Buoyancy at an interior node (1 when no grid was supplied).
    #[inline]
    pub fn b_at(&self, i: usize, j: usize, k: usize) -> f64 {
        match &self.b {
            Some(b) => b[self.idx(i, j, k)] as f64,
            None => 1.0,
        }
    }

    /// Bulk modulus `κ = c²/b` at an interior node.
    #[inline]
    pub fn kappa_at(&self, i: usize, j: usize, k: usize) -> f64 {
        let c = self.c_at(i, j, k);
        c * c / self.b_at(i, j, k)
    }

    /// Wavespeed at clamped indices: out-of-range indices replicate the
    /// nearest interior node, which is how the model extends into
    /// absorbing-layer padding.
    #[inline]
    pub fn c_clamped(&self, i: i64, j: i64, k: i64) -> f64 {
        let i = i.clamp(0, self.nx as i64 - 1) as usize;
        let j = j.clamp(0, self.ny as i64 - 1) as usize;
        let k = k.clamp(0, self.nz as i64 - 1) as usize;
        self.c_at(i, j, k)
    }

    /// Buoyancy with the same clamped extension.
    #[inline]
    pub fn b_clamped(&self, i: i64, j: i64, k: i64) -> f64 {
        let i = i.clamp(0, self.nx as i64 - 1) as usize;
        let j = j.clamp(0, self.ny as i64 - 1) as usize;
        let k = k.clamp(0, self.nz as i64 - 1) as usize;
        self.b_at(i, j, k)
    }

    /// Bulk modulus with the same clamped extension.
    #[inline]
    pub fn kappa_clamped(&self, i: i64, j: i64, k: i64) -> f64 {
        let c = self.c_clamped(i, j, k);
        c * c / self.b_clamped(i, j, k)
    }

    pub fn c_min(&self) -> f64 {
        self.c.iter().cloned().fold(f64::INFINITY as f32, f32::min) as f64
    }

    pub fn c_max(&self) -> f64 {
        self.c.iter().cloned().fold(0.0f32, f32::max) as f64
    }

    pub fn has_buoyancy(&self) -> bool {
        self.b.is_some()
    }
}

/// Local grid-sampling ratio `G(x) = c(x)/(freq·h)` per interior node.
pub fn local_g_field(model: &VelocityModel, freq: f64) -> Result<Vec<f64>, ModelError> {
    if !(freq > 0.0) || !freq.is_finite() {
        return Err(ModelError::BadFrequency(freq));
    }
    Ok(model.c.iter().map(|&c| c as f64 / (freq * model.h)).collect())
}

/// Monochromatic complex pressure field on a (possibly padded) grid.
///
/// `dims` cover the full stored grid; `pad` records how many of those
/// cells per face are absorbing-layer padding, so consumers can crop to
/// the physical interior.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    nx: usize,
    ny: usize,
    nz: usize,
    pad: usize,
    h: f64,
    freq: f64,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(
        nx: usize,
        ny: usize,
        nz: usize,
        pad: usize,
        h: f64,
        freq: f64,
        values: Vec<Complex64>,
    ) -> Result<Self, ModelError> {
        if nx < 3 || ny < 3 || nz < 3 || nx <= 2 * pad || ny <= 2 * pad || nz <= 2 * pad {
            return Err(ModelError::GridTooSmall(nx, ny, nz));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(ModelError::BadSpacing(h));
        }
        if !(freq > 0.0) || !freq.is_finite() {
            return Err(ModelError::BadFrequency(freq));
        }
        if values.len() != nx * ny * nz {
            return Err(ModelError::LengthMismatch {
                got: values.len(),
                want: nx * ny * nz,
                nx,
                ny,
                nz,
            });
        }
        Ok(ComplexField { nx, ny, nz, pad, h, freq, values })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    /// Absorbing-layer cells per face included in the dims.
    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.values[self.idx(i, j, k)]
    }

    /// Interior dims (pad stripped).
    pub fn interior_dims(&self) -> (usize, usize, usize) {
        (self.nx - 2 * self.pad, self.ny - 2 * self.pad, self.nz - 2 * self.pad)
    }

    /// Copies the interior region into a pad-free field.
    pub fn crop_to_interior(&self) -> ComplexField {
        if self.pad == 0 {
            return self.clone();
        }
        let (inx, iny, inz) = self.interior_dims();
        let mut values = Vec::with_capacity(inx * iny * inz);
        for i in 0..inx {
            for j in 0..iny {
                for k in 0..inz {
                    values.push(self.at(i + self.pad, j + self.pad, k + self.pad));
                }
            }
        }
        ComplexField { nx: inx, ny: iny, nz: inz, pad: 0, h: self.h, freq: self.freq, values }
    }

    /// First node with a non-finite value, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize, usize, Complex64)> {
        for (idx, v) in self.values.iter().enumerate() {
            if !v.re.is_finite() || !v.im.is_finite() {
                let i = idx / (self.ny * self.nz);
                let j = (idx / self.nz) % self.ny;
                let k = idx % self.nz;
                return Some((i, j, k, *v));
            }
        }
        None
    }
}

/// Point source: physical position in meters (interior-frame origin at
/// interior node (0,0,0)) and complex amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub position: [f64; 3],
    pub amplitude_re: f64,
    pub amplitude_im: f64,
}

impl SourceSpec {
    pub fn new(position: [f64; 3], amplitude: Complex64) -> Self {
        SourceSpec { position, amplitude_re: amplitude.re, amplitude_im: amplitude.im }
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::new(self.amplitude_re, self.amplitude_im)
    }

    /// Snaps to the nearest interior grid node, rejecting positions whose
    /// nearest node falls outside the interior (e.g. into absorbing
    /// padding).
    pub fn snap(&self, model: &VelocityModel) -> Result<(usize, usize, usize), ModelError> {
        if !self.amplitude().re.is_finite() || !self.amplitude().im.is_finite() {
            return Err(ModelError::BadAmplitude);
        }
        let dims = [model.nx, model.ny, model.nz];
        let mut out = [0usize; 3];
        for a in 0..3 {
            let t = self.position[a] / model.h;
            if !t.is_finite() {
                return Err(ModelError::SourceOutsideInterior(self.position));
            }
            let i = t.round();
            if i < 0.0 || i > (dims[a] - 1) as f64 {
                return Err(ModelError::SourceOutsideInterior(self.position));
            }
            out[a] = i as usize;
        }
        Ok((out[0], out[1], out[2]))
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    kind: String,
    dims: [usize; 3],
    spacing_m: f64,
    pad_cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    frequency_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    has_buoyancy: Option<bool>,
    ordering: String,
    byte_order: String,
    provenance: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<(), ModelError> {
    let sp = sidecar_path(path);
    let file = File::create(&sp).map_err(io_err(&sp))?;
    serde_json::to_writer_pretty(BufWriter::new(file), sidecar)
        .map_err(|source| ModelError::BadSidecar { path: sp.clone(), source })?;
    Ok(())
}

fn read_sidecar(path: &Path, want_kind: &str) -> Result<Sidecar, ModelError> {
    let sp = sidecar_path(path);
    let file = File::open(&sp).map_err(io_err(&sp))?;
    let sidecar: Sidecar = serde_json::from_reader(BufReader::new(file))
        .map_err(|source| ModelError::BadSidecar { path: sp.clone(), source })?;
    if sidecar.kind != want_kind {
        return Err(ModelError::WrongKind {
            path: sp,
            got: sidecar.kind,
            want: want_kind.to_string(),
        });
    }
    Ok(sidecar)
}

fn write_f32s(path: &Path, values: impl Iterator<Item = f32>) -> Result<(), ModelError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for v in values {
        out.write_all(&v.to_le_bytes()).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn read_f32s(path: &Path, want: usize) -> Result<Vec<f32>, ModelError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::new();
    BufReader::new(file).read_to_end(&mut bytes).map_err(io_err(path))?;
    if bytes.len() != want * 4 {
        return Err(ModelError::PayloadSizeMismatch {
            path: path.to_path_buf(),
            got: bytes.len() / 4,
            want,
        });
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

/// Default provenance string stamped into sidecars.
fn provenance() -> String {
    format!("helm27 {}", env!("CARGO_PKG_VERSION"))
}

/// Saves a velocity model as raw little-endian f32 (z-fastest) plus a
/// JSON sidecar. When a buoyancy grid is present it follows the wavespeed
/// grid in the same file.
pub fn save_model(model: &VelocityModel, path: &Path) -> Result<(), ModelError> {
    save_model_as(model, path, &provenance())
}

/// [`save_model`] with an explicit provenance string, so callers can
/// reference the run manifest that produced the file.
pub fn save_model_as(
    model: &VelocityModel,
    path: &Path,
    provenance: &str,
) -> Result<(), ModelError> {
    write_sidecar(
        path,
        &Sidecar {
            kind: "model".into(),
            dims: [model.nx, model.ny, model.nz],
            spacing_m: model.h,
            pad_cells: 0,
            frequency_hz: None,
            has_buoyancy: Some(model.b.is_some()),
            ordering: "z-fastest".into(),
            byte_order: "little-endian".into(),
            provenance: provenance.to_string(),
        },
    )?;
    match &model.b {
        Some(b) => write_f32s(path, model.c.iter().chain(b.iter()).cloned()),
        None => write_f32s(path, model.c.iter().cloned()),
    }
}

/// Loads a model written by [`save_model`].
pub fn load_model(path: &Path) -> Result<VelocityModel, ModelError> {
    let sidecar = read_sidecar(path, "model")?;
    let [nx, ny, nz] = sidecar.dims;
    let n = nx * ny * nz;
    let has_b = sidecar.has_buoyancy.unwrap_or(false);
    let values = read_f32s(path, if has_b { 2 * n } else { n })?;
    if has_b {
        let (c, b) = values.split_at(n);
        VelocityModel::with_buoyancy(nx, ny, nz, sidecar.spacing_m, c.to_vec(), b.to_vec())
    } else {
        VelocityModel::new(nx, ny, nz, sidecar.spacing_m, values)
    }
}

/// Saves a complex field as interleaved little-endian f32 (re, im) pairs,
/// z-fastest, with a JSON sidecar. Non-finite values are rejected with
/// their node location.
pub fn save_field(field: &ComplexField, path: &Path) -> Result<(), ModelError> {
    save_field_as(field, path, &provenance())
}

/// [`save_field`] with an explicit provenance string, so callers can
/// reference the run manifest that produced the file.
pub fn save_field_as(
    field: &ComplexField,
    path: &Path,
    provenance: &str,
) -> Result<(), ModelError> {
    if let Some((i, j, k, value)) = field.find_non_finite() {
        return Err(ModelError::NonFiniteField { value, i, j, k });
    }
    write_sidecar(
        path,
        &Sidecar {
            kind: "field".into(),
            dims: [field.nx, field.ny, field.nz],
            spacing_m: field.h,
            pad_cells: field.pad,
            frequency_hz: Some(field.freq),
            has_buoyancy: None,
            ordering: "z-fastest".into(),
            byte_order: "little-endian".into(),
            provenance: provenance.to_string(),
        },
    )?;
    write_f32s(
        path,
        field.values.iter().flat_map(|v| [v.re as f32, v.im as f32]),
    )
}

/// Loads a field written by [`save_field`].
pub fn load_field(path: &Path) -> Result<ComplexField, ModelError> {
    let sidecar = read_sidecar(path, "field")?;
    let [nx, ny, nz] = sidecar.dims;
    let raw = read_f32s(path, 2 * nx * ny * nz)?;
    let values = raw
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0] as f64, p[1] as f64))
        .collect();
    ComplexField::new(
        nx,
        ny,
        nz,
        sidecar.pad_cells,
        sidecar.spacing_m,
        sidecar.frequency_hz.ok_or_else(|| ModelError::BadFrequency(f64::NAN))?,
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn local_g_matches_benchmark_ratios() {
        let m = VelocityModel::homogeneous(3, 3, 3, 50.0, 1500.0).unwrap();
        let g = local_g_field(&m, 7.5).unwrap();
        assert!(g.iter().all(|&v| (v - 4.0).abs() < 1e-12));

        let m = VelocityModel::homogeneous(3, 3, 3, 50.0, 8500.0).unwrap();
        let g = local_g_field(&m, 7.5).unwrap();
        assert_abs_diff_eq!(g[0], 22.666666666666668, epsilon = 1e-12);
        assert!((g[0] - 22.7).abs() < 0.05);
    }

    #[test]
    fn g_field_bounds_follow_wavespeed_bounds() {
        let m = VelocityModel::gradient_y(4, 9, 5, 50.0, 1500.0, 4500.0).unwrap();
        let g = local_g_field(&m, 7.5).unwrap();
        let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let gmax = g.iter().cloned().fold(0.0, f64::max);
        assert_abs_diff_eq!(gmin, m.c_min() / (7.5 * 50.0), epsilon = 1e-12);
        assert_abs_diff_eq!(gmax, m.c_max() / (7.5 * 50.0), epsilon = 1e-12);
        assert_abs_diff_eq!(gmax, 12.0, epsilon = 1e-12);
    }

    #[test]
    fn model_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.f32raw");
        let m = VelocityModel::homogeneous(3, 3, 3, 25.0, 1500.0).unwrap();
        save_model(&m, &path).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let m2 = load_model(&path).unwrap();
        assert_eq!(m, m2);
        save_model(&m2, &path).unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());
    }

    #[test]
    fn model_round_trip_with_buoyancy() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.f32raw");
        let n = 4 * 3 * 5;
        let c: Vec<f32> = (0..n).map(|i| 1500.0 + i as f32).collect();
        let b: Vec<f32> = (0..n).map(|i| 1.0 / (1000.0 + i as f32)).collect();
        let m = VelocityModel::with_buoyancy(4, 3, 5, 10.0, c, b).unwrap();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.f32raw");
        let m = VelocityModel::homogeneous(3, 3, 3, 25.0, 1500.0).unwrap();
        save_model(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load_model(&path), Err(ModelError::PayloadSizeMismatch { .. })));
    }

    #[test]
    fn field_round_trip_and_nan_rejection() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.f32raw");
        let n = 5 * 4 * 3;
        let values: Vec<Complex64> =
            (0..n).map(|i| Complex64::new(i as f64 * 0.25, -(i as f64))).collect();
        let f = ComplexField::new(5, 4, 3, 1, 50.0, 7.5, values.clone()).unwrap();
        save_field(&f, &path).unwrap();
        let f2 = load_field(&path).unwrap();
        assert_eq!(f, f2);

        let mut bad_values = values;
        bad_values[13] = Complex64::new(f64::NAN, 0.0);
        let bad = ComplexField::new(5, 4, 3, 1, 50.0, 7.5, bad_values).unwrap();
        match save_field(&bad, &path) {
            Err(ModelError::NonFiniteField { i, j, k, .. }) => {
                assert_eq!((i, j, k), (1, 0, 1)); // idx 13 with ny=4, nz=3
            }
            other => panic!("expected NaN rejection, got {other:?}"),
        }
    }

    #[test]
    fn crop_strips_pad() {
        let n = 7 * 7 * 7;
        let values: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let f = ComplexField::new(7, 7, 7, 2, 1.0, 1.0, values).unwrap();
        let inner = f.crop_to_interior();
        assert_eq!(inner.interior_dims(), (3, 3, 3));
        assert_eq!(inner.pad(), 0);
        assert_eq!(inner.at(0, 0, 0), f.at(2, 2, 2));
        assert_eq!(inner.at(2, 2, 2), f.at(4, 4, 4));
    }

    #[test]
    fn source_snaps_and_rejects_outside() {
        let m = VelocityModel::homogeneous(5, 5, 5, 50.0, 1500.0).unwrap();
        let s = SourceSpec::new([101.0, 99.0, 125.1], Complex64::new(1.0, 0.0));
        assert_eq!(s.snap(&m).unwrap(), (2, 2, 3));
        let off = SourceSpec::new([-30.0, 0.0, 0.0], Complex64::new(1.0, 0.0));
        assert!(matches!(off.snap(&m), Err(ModelError::SourceOutsideInterior(_))));
        let beyond = SourceSpec::new([0.0, 0.0, 4.0 * 50.0 + 26.0], Complex64::new(1.0, 0.0));
        assert!(matches!(beyond.snap(&m), Err(ModelError::SourceOutsideInterior(_))));
    }

    #[test]
    fn embedded_box_overrides_background() {
        let m = VelocityModel::homogeneous(6, 6, 6, 40.0, 1500.0)
            .unwrap()
            .with_box([2, 2, 2], [4, 4, 4], 4482.0);
        assert_eq!(m.c_at(1, 2, 3), 1500.0);
        assert_eq!(m.c_at(3, 3, 3), 4482.0);
        assert_eq!(m.c_max(), 4482.0);
    }

    #[test]
    fn model_rejects_bad_values() {
        assert!(matches!(
            VelocityModel::homogeneous(2, 3, 3, 50.0, 1500.0),
            Err(ModelError::GridTooSmall(..))
        ));
        let mut c = vec![1500.0f32; 27];
        c[5] = -1.0;
        match VelocityModel::new(3, 3, 3, 50.0, c) {
            Err(ModelError::BadWavespeed { i, j, k, .. }) => assert_eq!((i, j, k), (0, 1, 2)),
            other => panic!("expected BadWavespeed, got {other:?}"),
        }
    }
}
