//! Crate-wide error type.

use crate::gan::Checkpoint;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

fn fmt_row(row: &Option<usize>) -> String {
    match row {
        Some(r) => format!(" at row {r}"),
        None => String::new(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A tensor/shape contract was violated. Carries both shapes.
    #[error("shape mismatch in {context}: {left} vs {right}")]
    ShapeMismatch {
        context: &'static str,
        left: String,
        right: String,
    },

    /// A multipath component falls outside the delay grid.
    #[error("path {index} at delay {delay_s} s lies outside the grid (span {span_s} s)")]
    PathOutsideGrid {
        index: usize,
        delay_s: f64,
        span_s: f64,
    },

    /// Delay statistics are undefined for an all-zero profile.
    #[error("zero total power")]
    ZeroTotalPower,

    /// An operation's precondition does not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Requested frequency band is not covered by the transfer function.
    #[error("band [{band_start} Hz, {band_end} Hz] outside the file span [{span_start} Hz, {span_end} Hz]")]
    BandOutsideSpan {
        band_start: f64,
        band_end: f64,
        span_start: f64,
        span_end: f64,
    },

    /// No bins above the fitting floor in any profile.
    #[error("empty fit support")]
    EmptyFitSupport,

    /// Network architectures do not line up layer by layer.
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    /// Training produced a non-finite loss; the last finite state is carried.
    #[error("divergence at epoch {epoch}")]
    Divergence {
        epoch: usize,
        last_checkpoint: Box<Checkpoint>,
    },

    /// A persisted file failed structural validation.
    #[error("file format error in {path}{}: {message}", fmt_row(row))]
    FileFormat {
        path: String,
        row: Option<usize>,
        message: String,
    },

    /// The on-disk header declares a version this build does not read.
    #[error("unsupported version {found} in {path} (supported: {supported})")]
    UnsupportedVersion {
        path: String,
        found: u32,
        supported: u32,
    },

    /// A referenced file does not exist.
    #[error("missing file: {0}")]
    MissingFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
