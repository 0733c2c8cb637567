//! Victim-side detection of cache side-channel attacks.
//!
//! This crate watches a protected process's hardware counters and raises an
//! alarm while an eviction-based cache attack (flush+reload, flush+flush,
//! prime+probe) is running against it. A process that runs undisturbed
//! takes essentially no last-level cache misses once its working set is
//! warm; an attacker that keeps evicting the victim's lines leaves a
//! sustained miss signature that a streaming cumulative-sum detector picks
//! up within milliseconds.
//!
//! The pieces, usable separately:
//!
//! - [`detector`]: the streaming change-point detector over miss counts.
//! - [`source`]: uniform access to counter samples from live hardware
//!   counters, recorded trace files, or the simulator.
//! - [`sim`]: labeled synthetic traces of victims under configurable
//!   attacks and background noise, plus profiling sweeps and datasets.
//! - [`monitor`]: the paced sampling service that ties a source to the
//!   detector, pauses on idle victims, and runs alarm reactions.
//! - [`features`]: information-gain and relief rankings for choosing which
//!   counter to monitor.
//! - [`eval`]: corpus evaluation (detection rate, delay, false-alarm rate),
//!   profiling-sweep evaluation, and noise sensitivity curves.
//!
//! # Quick start
//!
//! ```
//! use cacheshield::detector::{Detector, DetectorConfig};
//!
//! let mut det = Detector::new(DetectorConfig::default()).unwrap();
//! // Quiet victim: nothing accumulates.
//! for _ in 0..100 {
//!     assert!(!det.step(0.0).alarm);
//! }
//! // Sustained eviction pressure crosses the threshold within tens of
//! // samples.
//! let mut alarmed = false;
//! for _ in 0..100 {
//!     alarmed = alarmed || det.step(18.0).alarm;
//! }
//! assert!(alarmed);
//! ```
//!
//! # Runnable examples
//!
//! Each major capability has a runnable example under `examples/`:
//!
//! ```text
//! cargo run --release -p cacheshield --example streaming_detection
//! cargo run --release -p cacheshield --example simulate_traces
//! cargo run --release -p cacheshield --example replay_monitor
//! cargo run --release -p cacheshield --example corpus_eval
//! cargo run --release -p cacheshield --example profiling_sweep
//! cargo run --release -p cacheshield --example noise_far
//! cargo run --release -p cacheshield --example rank_counters
//! cargo run --release -p cacheshield --example attach_live
//! ```
//!
//! The `cacheshield` binary wraps the same library calls behind a small
//! command-line interface (`monitor`, `rank`, `eval`, `sweep`, `farcurve`).

pub mod detector;
pub mod error;
pub mod eval;
pub mod features;
pub mod monitor;
pub mod sim;
pub mod source;
pub mod trace;

/// Smallest supported sampling period. Below this the sampling loop
/// itself becomes the dominant cache client and the readings stop
/// meaning anything.
pub const MIN_PERIOD_US: u64 = 10;

pub use detector::{CounterSample, Decision, Detector, DetectorConfig};
pub use error::{Error, Result};
