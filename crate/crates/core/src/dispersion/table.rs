//! Weight tables keyed by inverse sampling ratio, with CSV persistence.

use super::solve::InvGGrid;
use super::{AngleGrid, DispersionError, WeightVector};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Errors from reading or writing weight-table CSV files.
#[derive(Debug, Error)]
pub enum TableIoError {
    #[error("table I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("table is internally inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Invalid(#[from] DispersionError),
}

/// Precomputed weight vectors on a uniform `1/G` grid.
///
/// Rows are ordered by increasing `1/G` (coarsening grids). Lookup is
/// nearest-row: the 0.001 default step makes interpolation unnecessary.
/// The table is immutable after construction and safe to share across
/// threads.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTable {
    inv_g_min: f64,
    inv_g_max: f64,
    inv_g_step: f64,
    lambda: f64,
    thetas_deg: Vec<f64>,
    phis_deg: Vec<f64>,
    rows: Vec<WeightVector>,
}

impl WeightTable {
    pub(crate) fn from_parts(
        grid: &InvGGrid,
        lambda: f64,
        angles: &AngleGrid,
        rows: Vec<WeightVector>,
    ) -> Result<Self, DispersionError> {
        let n = grid.len()?;
        if rows.len() != n {
            return Err(DispersionError::InvalidInvGGrid);
        }
        Ok(WeightTable {
            inv_g_min: grid.min,
            inv_g_max: grid.max,
            inv_g_step: grid.step,
            lambda,
            thetas_deg: angles.thetas().iter().map(|t| t.to_degrees()).collect(),
            phis_deg: angles.phis().iter().map(|p| p.to_degrees()).collect(),
            rows,
        })
    }

    /// Builds a one-row table that pins `w` for every lookup.
    ///
    /// Fixed-coefficient schemes (a fit at one sampling ratio, or the joint
    /// compromise vector fit across several) are represented as degenerate
    /// tables: [`WeightTable::lookup`] clamps out-of-range queries to the
    /// end rows, so a one-row table applies `w` uniformly. `inv_g` labels
    /// the row and must lie in the valid open interval `(0, 0.5)`; for a
    /// joint fit the coarsest fitted ratio is the conventional label.
    pub fn pinned(inv_g: f64, angles: &AngleGrid, w: WeightVector) -> Result<Self, DispersionError> {
        let grid = InvGGrid { min: inv_g, max: inv_g, step: 1.0 };
        Self::from_parts(&grid, 0.0, angles, vec![w])
    }

    pub fn inv_g_min(&self) -> f64 {
        self.inv_g_min
    }

    pub fn inv_g_max(&self) -> f64 {
        self.inv_g_max
    }

    pub fn inv_g_step(&self) -> f64 {
        self.inv_g_step
    }

    /// Regularization weight the table was built with.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rows(&self) -> &[WeightVector] {
        &self.rows
    }

    /// Tabulated `1/G` of row `i`.
    pub fn inv_g_at(&self, i: usize) -> f64 {
        self.inv_g_min + i as f64 * self.inv_g_step
    }

    /// Nearest tabulated row for a local sampling ratio.
    ///
    /// `1/G_local` outside the tabulated range clamps to the end rows;
    /// values midway between nodes resolve to the even-index neighbor
    /// (round half to even).
    pub fn lookup(&self, g_local: f64) -> &WeightVector {
        let t = (1.0 / g_local - self.inv_g_min) / self.inv_g_step;
        let i = if t.is_finite() {
            t.round_ties_even().clamp(0.0, (self.rows.len() - 1) as f64) as usize
        } else if t == f64::NEG_INFINITY {
            0
        } else {
            self.rows.len() - 1
        };
        &self.rows[i]
    }

    /// Writes the table as CSV with a `#` header line recording the grid,
    /// the regularization weight, and the fitting angles. All numbers use
    /// 17 significant digits, so files are diffable and round-trip without
    /// precision loss.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.write_csv_with_comment(out, None)
    }

    /// [`WeightTable::write_csv`] with an extra `#` comment line after the
    /// metadata header, typically a pointer to the run manifest that
    /// produced the file. Readers skip any such lines.
    pub fn write_csv_with_comment<W: Write>(
        &self,
        mut out: W,
        comment: Option<&str>,
    ) -> std::io::Result<()> {
        let list = |v: &[f64]| v.iter().map(fmt17).collect::<Vec<_>>().join(";");
        writeln!(
            out,
            "# inv_g_min={} inv_g_max={} inv_g_step={} lambda={} thetas_deg={} phis_deg={}",
            fmt17(&self.inv_g_min),
            fmt17(&self.inv_g_max),
            fmt17(&self.inv_g_step),
            fmt17(&self.lambda),
            list(&self.thetas_deg),
            list(&self.phis_deg),
        )?;
        if let Some(c) = comment {
            writeln!(out, "# {}", c.replace(['\r', '\n'], " "))?;
        }
        writeln!(out, "inv_g,ws1,ws2,ws3,wm0,wm1,wm2,wm3")?;
        for (i, w) in self.rows.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt17(&self.inv_g_at(i)),
                fmt17(&w.ws1),
                fmt17(&w.ws2),
                fmt17(&w.ws3),
                fmt17(&w.wm0),
                fmt17(&w.wm1),
                fmt17(&w.wm2),
                fmt17(&w.wm3),
            )?;
        }
        Ok(())
    }

    /// Parses a table written by [`WeightTable::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, TableIoError> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| TableIoError::Inconsistent("empty file".into()))?;
        let header = header?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| TableIoError::Parse { line: 1, message: "missing # header".into() })?;

        let mut inv_g_min = None;
        let mut inv_g_max = None;
        let mut inv_g_step = None;
        let mut lambda = None;
        let mut thetas_deg = Vec::new();
        let mut phis_deg = Vec::new();
        for field in header.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| TableIoError::Parse {
                line: 1,
                message: format!("malformed header field {field:?}"),
            })?;
            let parse_list = |v: &str| -> Result<Vec<f64>, TableIoError> {
                v.split(';')
                    .map(|s| {
                        s.parse::<f64>().map_err(|e| TableIoError::Parse {
                            line: 1,
                            message: format!("bad number {s:?}: {e}"),
                        })
                    })
                    .collect()
            };
            match key {
                "inv_g_min" => inv_g_min = Some(parse_list(value)?[0]),
                "inv_g_max" => inv_g_max = Some(parse_list(value)?[0]),
                "inv_g_step" => inv_g_step = Some(parse_list(value)?[0]),
                "lambda" => lambda = Some(parse_list(value)?[0]),
                "thetas_deg" => thetas_deg = parse_list(value)?,
                "phis_deg" => phis_deg = parse_list(value)?,
                _ => {
                    return Err(TableIoError::Parse {
                        line: 1,
                        message: format!("unknown header key {key:?}"),
                    })
                }
            }
        }
        let grid = InvGGrid {
            min: inv_g_min
                .ok_or_else(|| TableIoError::Inconsistent("header lacks inv_g_min".into()))?,
            max: inv_g_max
                .ok_or_else(|| TableIoError::Inconsistent("header lacks inv_g_max".into()))?,
            step: inv_g_step
                .ok_or_else(|| TableIoError::Inconsistent("header lacks inv_g_step".into()))?,
        };
        let lambda =
            lambda.ok_or_else(|| TableIoError::Inconsistent("header lacks lambda".into()))?;

        let columns = loop {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| TableIoError::Inconsistent("missing column header".into()))?;
            let line = line?;
            if line.trim_start().starts_with('#') {
                continue;
            }
            break (idx, line);
        };
        if columns.1 != "inv_g,ws1,ws2,ws3,wm0,wm1,wm2,wm3" {
            return Err(TableIoError::Parse {
                line: columns.0 + 1,
                message: "unexpected column header".into(),
            });
        }

        let expected = grid.len().map_err(TableIoError::Invalid)?;
        let mut rows = Vec::with_capacity(expected);
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let nums: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.parse::<f64>().map_err(|e| TableIoError::Parse {
                        line: idx + 1,
                        message: format!("bad number {s:?}: {e}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if nums.len() != 8 {
                return Err(TableIoError::Parse {
                    line: idx + 1,
                    message: format!("expected 8 columns, got {}", nums.len()),
                });
            }
            let tabulated = grid.min + rows.len() as f64 * grid.step;
            if (nums[0] - tabulated).abs() > grid.step * 1e-6 {
                return Err(TableIoError::Parse {
                    line: idx + 1,
                    message: format!("inv_g {} does not sit on the declared grid", nums[0]),
                });
            }
            let w = WeightVector {
                ws1: nums[1],
                ws2: nums[2],
                ws3: nums[3],
                wm0: nums[4],
                wm1: nums[5],
                wm2: nums[6],
                wm3: nums[7],
            };
            w.validate().map_err(TableIoError::Invalid)?;
            rows.push(w);
        }
        if rows.len() != expected {
            return Err(TableIoError::Inconsistent(format!(
                "header declares {expected} rows, file holds {}",
                rows.len()
            )));
        }

        Ok(WeightTable {
            inv_g_min: grid.min,
            inv_g_max: grid.max,
            inv_g_step: grid.step,
            lambda,
            thetas_deg,
            phis_deg,
            rows,
        })
    }

    /// Writes the table to a file.
    pub fn save(&self, path: &Path) -> Result<(), TableIoError> {
        self.save_with_comment(path, None)
    }

    /// Writes the table to a file with an optional `#` comment line (see
    /// [`WeightTable::write_csv_with_comment`]).
    pub fn save_with_comment(
        &self,
        path: &Path,
        comment: Option<&str>,
    ) -> Result<(), TableIoError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_csv_with_comment(&mut out, comment)?;
        out.flush()?;
        Ok(())
    }

    /// Reads a table from a file.
    pub fn load(path: &Path) -> Result<Self, TableIoError> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }
}

/// Formats with 17 significant digits (lossless for f64).
fn fmt17(v: &f64) -> String {
    format!("{v:.16e}")
}
