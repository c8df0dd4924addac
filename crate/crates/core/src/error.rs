use thiserror::Error;

/// Errors raised anywhere in the fitting and calibration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("consistency error at row {row}: {message}")]
    Consistency { row: usize, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("empirical likelihood solver failed: {0}")]
    Solver(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
