//! Experiment orchestration for the `fbm-exit` command line.
//!
//! An [`ExperimentSpec`] names one operation of `fbm-exit-core` and the grid
//! of horizons and discretizations to run it on. [`run`] validates it, runs
//! every cell with deterministic per-cell streams, writes the result file and
//! a [`RunManifest`] next to it.

mod output;
mod run;
mod spec;

use std::path::{Path, PathBuf};

pub use output::{
    emit_csv, emit_json, manifest_path, read_csv, sha256_file, Cell, EstimateRow,
    ESTIMATE_COLUMNS, LOWER_TAIL_COLUMNS, PATH_COLUMNS,
};
pub use run::{run, run_with_threads, threads_from_env, FitRecord, RunManifest, RunStatus, TaskSeed};
pub use spec::{ExperimentSpec, Format, Kind, SpecOverrides};

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "FBM_EXIT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for invalid input, 3 for failures while running or writing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 3,
        }
    }
}

impl From<fbm_exit_core::Error> for CliError {
    fn from(e: fbm_exit_core::Error) -> Self {
        use fbm_exit_core::Error as E;
        match e {
            E::Factorization { .. } | E::NegativeEigenvalue { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
