//! CSV/JSON serialisation of results and atomic file writes.
//!
//! Reals are written with 17 significant digits in scientific notation,
//! which round-trips every `f64` and never depends on locale.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::montecarlo::TrialRecord;
use crate::stats::EmpiricalSummary;
use crate::theory::TheoryPrediction;

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// A header plus rows of already-formatted cells.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner()
            .map_err(|e| Error::Csv(csv::Error::from(e.into_error())))
    }
}

/// Writes `bytes` to `path` via a temporary file in the same directory and
/// an atomic rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    write_atomic(path, &table.to_csv()?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub const TRIALS_HEADER: [&str; 13] = [
    "grid_index",
    "trial_index",
    "p",
    "n",
    "delta",
    "sigma2",
    "n_errors",
    "ber",
    "converged",
    "kkt_residual",
    "objective_per_p",
    "u_norm_over_sqrt_p",
    "noise_dot_residual",
];

pub fn trials_table(records: &[TrialRecord]) -> Table {
    let mut t = Table::new(&TRIALS_HEADER);
    for r in records {
        t.push(vec![
            r.grid_index.to_string(),
            r.trial_index.to_string(),
            r.p.to_string(),
            r.n.to_string(),
            fmt_real(r.delta),
            fmt_real(r.sigma2),
            r.n_errors.to_string(),
            fmt_real(r.ber),
            r.converged.to_string(),
            fmt_real(r.kkt_residual),
            fmt_real(r.objective_per_p),
            fmt_real(r.u_norm_over_sqrt_p),
            fmt_real(r.noise_dot_residual),
        ]);
    }
    t
}

pub fn summaries_table(summaries: &[EmpiricalSummary]) -> Table {
    let mut t = Table::new(&[
        "grid_index",
        "trials_used",
        "trials_excluded",
        "mean_ne",
        "ber_mean",
        "p_correct_hat",
        "p_correct_ci_lo",
        "p_correct_ci_hi",
        "tv_to_poisson",
        "lambda_p_used",
        "pairwise_error_corr",
    ]);
    for s in summaries {
        t.push(vec![
            s.grid_index.to_string(),
            s.trials_used.to_string(),
            s.trials_excluded.to_string(),
            fmt_real(s.mean_ne),
            fmt_real(s.ber_mean),
            fmt_real(s.p_correct_hat),
            fmt_real(s.p_correct_ci.0),
            fmt_real(s.p_correct_ci.1),
            fmt_real(s.tv_to_poisson),
            fmt_real(s.lambda_p_used),
            s.pairwise_error_corr.map(fmt_real).unwrap_or_default(),
        ]);
    }
    t
}

/// JSON form of a prediction, optionally with the sampling ratio it was
/// computed at.
#[derive(Debug, Clone, Serialize)]
pub struct PredictionReport {
    pub p: usize,
    pub delta: f64,
    pub sigma2: f64,
    #[serde(flatten)]
    pub prediction: TheoryPrediction,
}
