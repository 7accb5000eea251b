//! Experiment plumbing behind the `afsgm` binary: configuration, problem and
//! solver construction, metrics files and the three subcommands.

mod config;
mod metrics;
mod probe;
mod runner;

use std::path::PathBuf;

use thiserror::Error;

use crate::bias_probe::ProbeError;
use crate::oracle::OracleError;
use crate::problems::ProblemError;
use crate::solvers::SolverError;

pub use config::{
    parse_pairs, DataSettings, DataSource, ProbeRunConfig, ProblemKind, QuadraticSettings, RunConfig,
    SolverKind, SolverSettings,
};
pub use metrics::{
    interpolate_at, metrics_csv, parse_metrics_csv, summary_csv, summary_table, MetricsRow, SummaryLine,
    METRICS_HEADER, METRICS_SCHEMA_VERSION, SUMMARY_HEADER,
};
pub use probe::{probe, probe_csv, probe_problem, probe_report_text, write_probe, PROBE_CSV_HEADER};
pub use runner::{
    build_problem, build_solver, compare, execute, summarize, unique_names, write_compare, write_run,
    BuiltProblem, CompareOutput, RunOutput,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Probe(ProbeError),
    #[error("run `{name}` failed after {rows} logged rows: {source}")]
    RunFailed {
        name: String,
        rows: usize,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<ProbeError> for HarnessError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::UnknownMode(_) | ProbeError::InvalidParameter(_) => HarnessError::Usage(e.to_string()),
            other => HarnessError::Probe(other),
        }
    }
}

impl HarnessError {
    /// Process exit code: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}
