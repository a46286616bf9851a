use std::fs;
use std::path::{Path, PathBuf};

use manifold_admm::solver::TraceRow;
use serde::{Deserialize, Serialize};

use crate::settings::{CliError, CliResult};

/// Allowed rise between consecutive `psi` entries, relative to `max(|psi|, 1)`.
pub const PSI_TOLERANCE: f64 = 1e-9;

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Run(format!("{}: {e}", path.display()))
}

pub fn trace_path(dir: &Path, command: &str, instance: &str, seed: u64) -> PathBuf {
    dir.join(format!("{command}_{instance}_seed{seed}.csv"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceCheck {
    pub file: String,
    pub rows: usize,
    /// Largest `psi[k+1] - psi[k]`.
    pub max_rise: f64,
    pub ok: bool,
}

/// Reads a solver trace back and checks that `psi` is nonincreasing.
pub fn verify_trace(path: &Path) -> CliResult<TraceCheck> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut prev: Option<f64> = None;
    let mut rows = 0;
    let mut max_rise = f64::NEG_INFINITY;
    let mut ok = true;
    for row in r.deserialize::<TraceRow>() {
        let row = row.map_err(|e| io_err(path, e))?;
        if let Some(p) = prev {
            let rise = row.psi - p;
            max_rise = max_rise.max(rise);
            ok &= rise <= PSI_TOLERANCE * p.abs().max(1.0);
        }
        ok &= row.psi.is_finite();
        prev = Some(row.psi);
        rows += 1;
    }
    Ok(TraceCheck {
        file: path.display().to_string(),
        rows,
        max_rise: if rows > 1 { max_rise } else { 0.0 },
        ok,
    })
}

/// Checks every trace and fails when any `psi` column rises.
pub fn verify_all(paths: &[PathBuf]) -> CliResult<Vec<TraceCheck>> {
    let checks = paths.iter().map(|p| verify_trace(p)).collect::<CliResult<Vec<_>>>()?;
    for c in &checks {
        eprintln!(
            "verify-trace {}: {} rows, max rise {:.3e}, {}",
            c.file,
            c.rows,
            c.max_rise,
            if c.ok { "ok" } else { "RISES" }
        );
    }
    Ok(checks)
}
