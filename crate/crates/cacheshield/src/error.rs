//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]. Parse errors for the on-disk
//! formats carry the 1-based line number of the offending input so callers
//! can point at the exact record that broke.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A detector or monitor configuration value is out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A scenario, corpus, or grid specification is inconsistent.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// The requested process does not exist or is not visible.
    #[error("no such process: pid {0}")]
    NoSuchProcess(u32),

    /// Hardware counters cannot be opened on this platform or with the
    /// current privileges.
    #[error("hardware counters unavailable: {reason}")]
    CountersUnavailable { reason: String },

    /// The monitored process exited while samples were still being read.
    #[error("monitored target exited")]
    TargetExited,

    /// A counter read failed mid-stream.
    #[error("counter read failed: {reason}")]
    ReadFailure { reason: String },

    /// Spawning a command for monitoring failed.
    #[error("failed to spawn {command:?}: {source}")]
    SpawnFailure {
        command: String,
        #[source]
        source: io::Error,
    },

    /// Live monitoring was requested on a platform without counter support.
    #[error("platform unsupported: {0}")]
    PlatformUnsupported(String),

    /// Resume was requested while the monitor was not paused.
    #[error("monitor is not paused")]
    NotPaused,

    /// The monitor loop is no longer running.
    #[error("monitor has shut down")]
    MonitorShutDown,

    /// A trace file failed to parse.
    #[error("{path}:{line}: malformed trace: {reason}")]
    MalformedTrace {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// A labeled dataset file failed to parse.
    #[error("{path}:{line}: malformed dataset: {reason}")]
    MalformedDataset {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// A key-value specification file failed to parse.
    #[error("{path}:{line}: malformed spec file: {reason}")]
    MalformedSpecFile {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// An event log failed to parse.
    #[error("{path}:{line}: malformed event log: {reason}")]
    MalformedEvents {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// An evaluation report failed to parse.
    #[error("{path}:{line}: malformed report: {reason}")]
    MalformedReport {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// A named attribute is not a column of the dataset.
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),

    /// The dataset has no rows.
    #[error("dataset is empty")]
    EmptyDataset,

    /// Relief needs at least one instance of each class.
    #[error("dataset contains a single class; relief needs both")]
    SingleClassDataset,

    /// An underlying I/O operation failed.
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
