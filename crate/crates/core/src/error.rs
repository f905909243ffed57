use thiserror::Error;

/// Errors produced by the precoding library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input had the wrong length or dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter was outside its valid range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear system was singular or too ill-conditioned to trust.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The exhaustive search was asked for more candidates than the hard cap.
    #[error("search space too large: {candidates:.3e} candidates exceeds the {limit:.3e} cap")]
    SearchSpaceTooLarge { candidates: f64, limit: f64 },

    /// A parameter file could not be parsed.
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    /// Training was aborted because the validation loss blew up.
    #[error("training diverged at epoch {epoch}: validation loss {val_loss:.6e} exceeded 10x the initial {initial:.6e} for {consecutive} consecutive epochs")]
    Diverged {
        epoch: usize,
        val_loss: f64,
        initial: f64,
        consecutive: usize,
    },
}
