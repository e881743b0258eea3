//! Gaussian-gated LSTM (g-LSTM) training library.
//!
//! A from-scratch recurrent-network stack: dense math and initializers, the
//! Gaussian time gate, LSTM / g-LSTM dynamics with exact BPTT, losses and
//! optimizers with per-group learning rates, the temporal-curriculum
//! schedule, dataset generation/ingestion, and diagnostics (gradient-norm
//! profiles, analytic op counts, finite-difference gradient checks).

pub mod math;
pub mod timegate;
pub mod lstm;
pub mod gated_rnn;
pub mod checkpoint;
pub mod optim;
pub mod tasks;
pub mod training;
pub mod diagnostics;
pub mod presets;
pub mod cli;

use std::fmt;
use std::io;
use std::path::Path;

/// Library-level error type for fallible operations (I/O, parsing, config
/// validation, numeric failure). Shape and argument violations in the pure
/// math layer panic instead; they are programming errors.
#[derive(Debug)]
pub enum Error {
    Io(io::Error),
    /// Malformed data or checkpoint contents.
    Format(String),
    /// Invalid or inconsistent configuration.
    Config(String),
    /// NaN or non-finite values encountered during training/evaluation.
    Numeric(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric failure: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Writes a file atomically: the bytes go to a sibling temp file which is
/// then renamed over the target, so readers never observe partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("invalid output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
