//! Run manifests: one JSON record per invocation, written next to the
//! primary output. Every output file carries a pointer back to its
//! manifest (in the binary sidecar's provenance string or a CSV comment
//! line), and the manifest holds every effective setting, so any
//! artifact can be regenerated from the manifest alone.

use crate::{CliError, Ctx};
use helm27::dispersion::WeightTable;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

pub const TOOL: &str = "helm27";

/// Provenance record for one command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub created_unix: u64,
    pub threads: usize,
    pub deterministic: bool,
    pub config_file: Option<String>,
    /// Every effective setting after merging flags, config file, and
    /// built-in defaults.
    pub resolved_config: serde_json::Value,
    /// SHA-256 of the canonical `resolved_config` JSON text.
    pub config_sha256: String,
    /// Identity of the weight table consumed or produced, if any.
    pub weight_table: Option<WeightTableId>,
    pub timings_ms: BTreeMap<String, f64>,
    /// Solver or iteration statistics, when the command ran one.
    pub solver: Option<serde_json::Value>,
    /// Files written by this run (the manifest itself excluded).
    pub outputs: Vec<String>,
}

/// Identifies a weight table by content, not just by name.
#[derive(Debug, Serialize)]
pub struct WeightTableId {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
    pub lambda: f64,
    pub inv_g_min: f64,
    pub inv_g_max: f64,
    pub inv_g_step: f64,
}

impl RunManifest {
    pub fn new(ctx: &Ctx, command: &str, resolved: serde_json::Value) -> Self {
        let canon = serde_json::to_string(&resolved).unwrap_or_default();
        RunManifest {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            core_version: helm27::VERSION,
            command: command.to_string(),
            argv: ctx.argv.clone(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            threads: ctx.threads,
            deterministic: ctx.deterministic,
            config_file: ctx.config_path.as_ref().map(|p| p.display().to_string()),
            resolved_config: resolved,
            config_sha256: sha256_hex(canon.as_bytes()),
            weight_table: None,
            timings_ms: BTreeMap::new(),
            solver: None,
            outputs: Vec::new(),
        }
    }

    /// Records a timing under `key`, in milliseconds.
    pub fn time(&mut self, key: &str, ms: f64) {
        self.timings_ms.insert(key.to_string(), ms);
    }

    /// Records an output file path.
    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Manifest path for a given primary output: `<output>.manifest.json`.
    pub fn path_for(primary_output: &Path) -> PathBuf {
        PathBuf::from(format!("{}.manifest.json", primary_output.display()))
    }

    /// Provenance string embedded in output files, naming the tool and
    /// the manifest the output belongs to.
    pub fn provenance(manifest_path: &Path) -> String {
        let name = manifest_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| manifest_path.display().to_string());
        format!("{TOOL} {} manifest={name}", env!("CARGO_PKG_VERSION"))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(path, text.as_bytes())
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }
}

/// Content identity for a weight-table file already on disk.
pub fn table_id(path: &Path, table: &WeightTable) -> Result<WeightTableId, CliError> {
    Ok(WeightTableId {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
        rows: table.rows().len(),
        lambda: table.lambda(),
        inv_g_min: table.inv_g_min(),
        inv_g_max: table.inv_g_max(),
        inv_g_step: table.inv_g_step(),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let wrap = |e: std::io::Error| CliError::Io(format!("cannot read {}: {e}", path.display()));
    let mut f = std::fs::File::open(path).map_err(wrap)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(wrap)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}
