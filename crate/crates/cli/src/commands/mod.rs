//! Subcommand implementations and shared plumbing.

pub mod compare;
pub mod dispersion;
pub mod makemodel;
pub mod reference;
pub mod solve;
pub mod weights;

use crate::CliError;
use helm27::model::{ComplexField, VelocityModel};
use std::path::Path;
use std::time::Duration;

pub(crate) fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Loads a model file; every failure here is an I/O-category error
/// (missing, unreadable, or corrupt input).
pub(crate) fn load_model_io(path: &Path) -> Result<VelocityModel, CliError> {
    helm27::model::load_model(path)
        .map_err(|e| CliError::Io(format!("cannot load model {}: {e}", path.display())))
}

/// Loads a field file; failures are I/O-category errors.
pub(crate) fn load_field_io(path: &Path) -> Result<ComplexField, CliError> {
    helm27::model::load_field(path)
        .map_err(|e| CliError::Io(format!("cannot load field {}: {e}", path.display())))
}

/// Saves a field with a provenance string; failures are I/O errors.
pub(crate) fn save_field_io(
    field: &ComplexField,
    path: &Path,
    provenance: &str,
) -> Result<(), CliError> {
    helm27::model::save_field_as(field, path, provenance)
        .map_err(|e| CliError::Io(format!("cannot write field {}: {e}", path.display())))
}

/// Loads a weight table; failures are I/O-category errors (the file is
/// user data, whether missing or malformed).
pub(crate) fn load_table_io(path: &Path) -> Result<helm27::dispersion::WeightTable, CliError> {
    helm27::dispersion::WeightTable::load(path)
        .map_err(|e| CliError::Io(format!("cannot load weight table {}: {e}", path.display())))
}

/// Maps a displayable core error to a usage error (exit 2).
pub(crate) fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

/// Resolves a fitting-angle grid from explicit degree lists, falling back
/// to the library's default fit angles when both lists are absent.
pub(crate) fn resolve_angles(
    flag_thetas: &[f64],
    flag_phis: &[f64],
    file_thetas: Option<&Vec<f64>>,
    file_phis: Option<&Vec<f64>>,
) -> Result<helm27::dispersion::AngleGrid, CliError> {
    let default = helm27::dispersion::AngleGrid::default_fit();
    let pick = |flag: &[f64], file: Option<&Vec<f64>>, fallback: &[f64]| -> Vec<f64> {
        if !flag.is_empty() {
            flag.to_vec()
        } else if let Some(f) = file {
            f.clone()
        } else {
            fallback.iter().map(|r| r.to_degrees()).collect()
        }
    };
    let thetas = pick(flag_thetas, file_thetas, default.thetas());
    let phis = pick(flag_phis, file_phis, default.phis());
    helm27::dispersion::AngleGrid::from_degrees(&thetas, &phis).map_err(usage)
}
