//! Command-line front end for the gossip simulators: topology generation,
//! single runs of the synchronous, asynchronous, and round-synchronized
//! engines, seed sweeps, band reports, and artifact validation.
//!
//! All file output is line-oriented JSON or CSV with no timestamps or other
//! run-environment state, so identical invocations produce identical bytes.

pub mod args;
pub mod exec;
pub mod runfile;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] gossip_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed run file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Median of an unsorted slice; averages the middle pair on even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}
