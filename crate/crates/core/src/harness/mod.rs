//! Scenario files, end-to-end runs, traces, replay and reference tables.

mod run;
mod scenario;
mod stream;
mod tables;
mod trace;

pub use run::{run_scenario, run_scenario_with, snr_sweep, RunOptions, RunOutput, SnrSweepRow};
pub use scenario::{
    BitSource, ChannelSpec, EmitterSpec, Expectation, FixedMask, Metric, ProtocolSpec, ReceiverSpec, Scenario,
    SCHEMA_VERSION,
};
pub use stream::TxStream;
pub use tables::{reproduce_table, TableCell, TableName, TableReport};
pub use trace::{compute_reports, replay_record, replay_trace, write_samples_csv, DwellRecord, Outcome, TraceRecord};

use crate::channel::ChannelError;
use crate::framing::FramingError;
use crate::metrics::MetricsError;
use crate::modem::ModemError;
use crate::optics::{GeometryError, Infeasible};
use crate::protocol::ProtocolError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("infeasible placement: {0}")]
    Infeasible(Infeasible),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Modem(#[from] ModemError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}
