//! Shared helpers for CSV/JSON output.

use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Shortest scientific form that round-trips any `f64` (17 significant digits).
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
