//! Optional TOML configuration. Each table mirrors one subcommand's
//! tunable flags; command-line flags always win over file values, and
//! built-in defaults fill whatever remains. The fully resolved settings
//! are recorded in the run manifest.

use crate::CliError;
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub weights: WeightsSection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub dispersion: DispersionSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub inv_g_min: Option<f64>,
    pub inv_g_max: Option<f64>,
    pub step: Option<f64>,
    pub lambda: Option<f64>,
    pub thetas_deg: Option<Vec<f64>>,
    pub phis_deg: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub weights: Option<String>,
    pub pml: Option<usize>,
    pub r_coeff: Option<f64>,
    pub method: Option<String>,
    pub precond: Option<String>,
    pub restart: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub memory_cap_bytes: Option<usize>,
    pub mass_mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub pad: Option<usize>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub absorber_strength: Option<f64>,
    pub epsilon_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub ball: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionSection {
    pub samples: Option<usize>,
    pub thetas_deg: Option<Vec<f64>>,
    pub phis_deg: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}
