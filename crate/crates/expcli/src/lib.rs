//! Config-driven experiments on bistable fronts with memory: β-sweeps of the
//! front speed, single fronts, the two-scale example and kernel checks.
//! Outputs are plain CSV plus small JSON summaries.

pub mod config;
pub mod front;
pub mod io;
pub mod kernel_check;
pub mod sweep;
pub mod twoscale;

pub use config::{ConfigError, ExperimentConfig, Kind};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{failed} of {total} rows failed (budget is 10%)")]
    Budget { failed: usize, total: usize },
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 for solver
    /// failures, 1 for output errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Solver(_) | Self::Budget { .. } => 3,
            Self::Io(_) | Self::Csv(_) | Self::Json(_) => 1,
        }
    }

    pub(crate) fn solver(e: impl std::fmt::Display) -> Self {
        Self::Solver(e.to_string())
    }
}

/// Caps the global rayon pool at `MEMFRONT_THREADS` when set.
pub fn init_thread_pool() -> Result<(), ConfigError> {
    if let Ok(v) = std::env::var("MEMFRONT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| ConfigError::Invalid(format!("MEMFRONT_THREADS must be a positive integer, got '{v}'")))?;
        // a second initialization (e.g. in tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
