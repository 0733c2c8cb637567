//! Batch evaluation over trace corpora: detection rate, detection delay,
//! and false-alarm accounting, with plot-ready exports.
//!
//! A corpus is a list of scenarios with repetition counts. Every
//! repetition gets its own derived seed, its own generated trace, and an
//! independent detector; outcomes are folded per scenario and overall.
//! The bookkeeping conventions, chosen once and used everywhere:
//!
//! - the alarm index `k` is 1-based (the detector alarmed after
//!   consuming sample `k`); the attack onset `lambda` is the 0-based
//!   index of the first attacked sample;
//! - an attack trace counts as detected only when `k - 1 >= lambda`; an
//!   alarm strictly before the onset is an early alarm, a false positive
//!   that is never a detection;
//! - detection delay is `k - lambda` samples, converted to milliseconds
//!   with the configured period;
//! - the per-sample false-alarm rate on attack-free traces is
//!   `alarms / exposure`, where a trace contributes `k` samples if it
//!   alarmed and its full length otherwise. When every trace alarms this
//!   is exactly the reciprocal mean time to first alarm; censored traces
//!   pull the estimate down instead of being silently dropped. The
//!   per-trace rate (fraction of attack-free traces with an alarm) is
//!   reported alongside because the two answer different questions.
//!
//! Evaluation parallelizes across traces; aggregation is an ordered fold
//! over the job list, so reports are byte-identical regardless of thread
//! count.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{Comparison, Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::sim::spec_file::{parse_kv_file, scenario_from_entries, scenario_to_kv, spec_file_error, KvEntry};
use crate::sim::{generate_trace, mix_seed, NoiseProfile, NoiseSpec, ScenarioSpec, SweepEntry};
use crate::trace::Trace;
use crate::MIN_PERIOD_US;

/// 1-based index of the first alarming sample, if any.
pub fn detection_index(config: &DetectorConfig, trace: &Trace) -> Result<Option<u64>> {
    let mut detector = Detector::new(*config)?;
    for (i, sample) in trace.samples.iter().enumerate() {
        if detector.update(sample).alarm {
            return Ok(Some(i as u64 + 1));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

/// One scenario slot in a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    /// Row label in reports; also the key prefix in corpus files.
    pub name: String,
    pub scenario: ScenarioSpec,
    pub repetitions: u32,
}

/// Everything a corpus evaluation needs: scenarios, detector, period.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub period_us: u64,
    pub detector: DetectorConfig,
    pub entries: Vec<CorpusEntry>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name != "overall"
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.period_us < MIN_PERIOD_US {
            return Err(Error::InvalidSpec(format!(
                "period_us must be >= {MIN_PERIOD_US}, got {}",
                self.period_us
            )));
        }
        self.detector.validate()?;
        if self.entries.is_empty() {
            return Err(Error::InvalidSpec("corpus has no scenarios".into()));
        }
        for (i, entry) in self.entries.iter().enumerate() {
            if !valid_name(&entry.name) {
                return Err(Error::InvalidSpec(format!(
                    "scenario name {:?} must be lowercase [a-z0-9_-] and not \"overall\"",
                    entry.name
                )));
            }
            if self.entries[..i].iter().any(|e| e.name == entry.name) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate scenario name {:?}",
                    entry.name
                )));
            }
            if entry.repetitions == 0 {
                return Err(Error::InvalidSpec(format!(
                    "scenario {:?} has zero repetitions",
                    entry.name
                )));
            }
            entry.scenario.validate()?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// One aggregated line of an evaluation report. Field order doubles as
/// the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scenario: String,
    pub traces: u64,
    pub attack_traces: u64,
    pub quiet_traces: u64,
    pub detected: u64,
    pub early_alarms: u64,
    pub false_alarms: u64,
    /// Attack-free exposure: samples consumed up to the first alarm, or
    /// the whole trace when none fired.
    pub quiet_samples: u64,
    pub detection_rate: Option<f64>,
    pub add_samples: Option<f64>,
    pub add_ms: Option<f64>,
    pub far_per_sample: Option<f64>,
    pub far_per_trace: Option<f64>,
}

/// Per-scenario rows plus the overall fold.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub period_us: u64,
    pub detector: DetectorConfig,
    pub scenarios: Vec<EvalRow>,
    pub overall: EvalRow,
}

impl EvalReport {
    /// Scenario rows followed by the overall row, as exported.
    pub fn all_rows(&self) -> Vec<EvalRow> {
        let mut rows = self.scenarios.clone();
        rows.push(self.overall.clone());
        rows
    }
}

/// Raw per-trace outcome, folded into rows by the aggregator.
#[derive(Debug, Clone, Copy)]
struct TraceOutcome {
    alarm: Option<u64>,
    lambda: Option<u64>,
    len: u64,
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    traces: u64,
    attack_traces: u64,
    quiet_traces: u64,
    detected: u64,
    early_alarms: u64,
    false_alarms: u64,
    quiet_samples: u64,
    delay_samples_sum: f64,
}

impl Tally {
    fn add(&mut self, o: &TraceOutcome) {
        self.traces += 1;
        match o.lambda {
            Some(lambda) => {
                self.attack_traces += 1;
                match o.alarm {
                    Some(k) if k > lambda => {
                        self.detected += 1;
                        self.delay_samples_sum += (k - lambda) as f64;
                    }
                    Some(_) => self.early_alarms += 1,
                    None => {}
                }
            }
            None => {
                self.quiet_traces += 1;
                match o.alarm {
                    Some(k) => {
                        self.false_alarms += 1;
                        self.quiet_samples += k;
                    }
                    None => self.quiet_samples += o.len,
                }
            }
        }
    }

    fn row(&self, scenario: &str, period_us: u64) -> EvalRow {
        let add_samples = (self.detected > 0).then(|| self.delay_samples_sum / self.detected as f64);
        EvalRow {
            scenario: scenario.to_string(),
            traces: self.traces,
            attack_traces: self.attack_traces,
            quiet_traces: self.quiet_traces,
            detected: self.detected,
            early_alarms: self.early_alarms,
            false_alarms: self.false_alarms,
            quiet_samples: self.quiet_samples,
            detection_rate: (self.attack_traces > 0)
                .then(|| self.detected as f64 / self.attack_traces as f64),
            add_samples,
            add_ms: add_samples.map(|s| s * period_us as f64 / 1000.0),
            far_per_sample: (self.quiet_traces > 0)
                .then(|| self.false_alarms as f64 / self.quiet_samples as f64),
            far_per_trace: (self.quiet_traces > 0)
                .then(|| self.false_alarms as f64 / self.quiet_traces as f64),
        }
    }
}

/// Generate and score every repetition of every scenario.
///
/// Repetition `r` of a scenario runs with seed `mix_seed(seed, r)` so
/// corpora are reproducible trace-by-trace yet repetitions stay
/// decorrelated.
pub fn evaluate_corpus(spec: &CorpusSpec) -> Result<EvalReport> {
    spec.validate()?;

    let jobs: Vec<(usize, u32)> = spec
        .entries
        .iter()
        .enumerate()
        .flat_map(|(i, e)| (0..e.repetitions).map(move |r| (i, r)))
        .collect();

    let outcomes: Vec<TraceOutcome> = jobs
        .par_iter()
        .map(|&(entry_idx, rep)| {
            let entry = &spec.entries[entry_idx];
            let mut scenario = entry.scenario.clone();
            scenario.seed = mix_seed(entry.scenario.seed, rep as u64);
            let (trace, label) = generate_trace(&scenario, spec.period_us)?;
            Ok(TraceOutcome {
                alarm: detection_index(&spec.detector, &trace)?,
                lambda: label.lambda,
                len: trace.len() as u64,
            })
        })
        .collect::<Result<_>>()?;

    let mut per_entry = vec![Tally::default(); spec.entries.len()];
    let mut overall = Tally::default();
    for (&(entry_idx, _), outcome) in jobs.iter().zip(&outcomes) {
        per_entry[entry_idx].add(outcome);
        overall.add(outcome);
    }

    Ok(EvalReport {
        period_us: spec.period_us,
        detector: spec.detector,
        scenarios: spec
            .entries
            .iter()
            .zip(&per_entry)
            .map(|(e, t)| t.row(&e.name, spec.period_us))
            .collect(),
        overall: overall.row("overall", spec.period_us),
    })
}

// ---------------------------------------------------------------------------
// Report export / import
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" => Ok(ReportFormat::Jsonl),
            other => Err(Error::InvalidConfig(format!(
                "format must be \"csv\" or \"jsonl\", got {other:?}"
            ))),
        }
    }
}

const REPORT_HEADER: &str = "scenario,traces,attack_traces,quiet_traces,detected,early_alarms,\
                             false_alarms,quiet_samples,detection_rate,add_samples,add_ms,\
                             far_per_sample,far_per_trace";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write scenario rows then the overall row. CSV encodes absent
/// statistics as empty cells, JSON lines as nulls; both read back equal.
pub fn export_report(path: impl AsRef<Path>, report: &EvalReport, format: ReportFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    match format {
        ReportFormat::Csv => {
            writeln!(w, "{REPORT_HEADER}")?;
            for r in report.all_rows() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.scenario,
                    r.traces,
                    r.attack_traces,
                    r.quiet_traces,
                    r.detected,
                    r.early_alarms,
                    r.false_alarms,
                    r.quiet_samples,
                    opt(r.detection_rate),
                    opt(r.add_samples),
                    opt(r.add_ms),
                    opt(r.far_per_sample),
                    opt(r.far_per_trace),
                )?;
            }
        }
        ReportFormat::Jsonl => {
            for r in report.all_rows() {
                let line = serde_json::to_string(&r)
                    .map_err(|e| Error::InvalidSpec(format!("report serialization: {e}")))?;
                writeln!(w, "{line}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn report_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedReport {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Read rows written by [`export_report`] (scenario rows plus overall).
pub fn read_report(path: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<EvalRow>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    match format {
        ReportFormat::Csv => {
            let mut lines = reader.lines().enumerate();
            let (_, header) = lines
                .next()
                .ok_or_else(|| report_error(path, 1, "empty file, expected header"))?;
            if header?.trim_end() != REPORT_HEADER {
                return Err(report_error(path, 1, "unrecognized report header"));
            }
            for (idx, line) in lines {
                let lineno = idx + 1;
                let line = line?;
                let line = line.trim_end();
                if line.is_empty() {
                    continue;
                }
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != 13 {
                    return Err(report_error(
                        path,
                        lineno,
                        format!("expected 13 cells, got {}", cells.len()),
                    ));
                }
                let count = |i: usize, name: &str| -> Result<u64> {
                    cells[i].parse().map_err(|_| {
                        report_error(path, lineno, format!("bad {name} count {:?}", cells[i]))
                    })
                };
                let stat = |i: usize, name: &str| -> Result<Option<f64>> {
                    if cells[i].is_empty() {
                        return Ok(None);
                    }
                    let v: f64 = cells[i].parse().map_err(|_| {
                        report_error(path, lineno, format!("bad {name} value {:?}", cells[i]))
                    })?;
                    Ok(Some(v))
                };
                rows.push(EvalRow {
                    scenario: cells[0].to_string(),
                    traces: count(1, "traces")?,
                    attack_traces: count(2, "attack_traces")?,
                    quiet_traces: count(3, "quiet_traces")?,
                    detected: count(4, "detected")?,
                    early_alarms: count(5, "early_alarms")?,
                    false_alarms: count(6, "false_alarms")?,
                    quiet_samples: count(7, "quiet_samples")?,
                    detection_rate: stat(8, "detection_rate")?,
                    add_samples: stat(9, "add_samples")?,
                    add_ms: stat(10, "add_ms")?,
                    far_per_sample: stat(11, "far_per_sample")?,
                    far_per_trace: stat(12, "far_per_trace")?,
                });
            }
        }
        ReportFormat::Jsonl => {
            for (idx, line) in reader.lines().enumerate() {
                let lineno = idx + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: EvalRow = serde_json::from_str(&line)
                    .map_err(|e| report_error(path, lineno, e.to_string()))?;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Profiling-sweep scoring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetAlarm {
    pub set_index: u32,
    pub alarmed: bool,
    pub alarm_index: Option<u64>,
}

/// Alarm verdict per probed cache set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepBitmap {
    pub sets: Vec<SetAlarm>,
}

impl SweepBitmap {
    pub fn alarmed_sets(&self) -> Vec<u32> {
        self.sets
            .iter()
            .filter(|s| s.alarmed)
            .map(|s| s.set_index)
            .collect()
    }
}

/// Run an independent detector over every probed set's trace.
pub fn evaluate_sweep(sweep: &[SweepEntry], detector: &DetectorConfig) -> Result<SweepBitmap> {
    if sweep.is_empty() {
        return Err(Error::InvalidSpec("sweep has no entries".into()));
    }
    detector.validate()?;
    let sets: Vec<SetAlarm> = sweep
        .par_iter()
        .map(|entry| {
            let alarm_index = detection_index(detector, &entry.trace)?;
            Ok(SetAlarm {
                set_index: entry.set_index,
                alarmed: alarm_index.is_some(),
                alarm_index,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepBitmap { sets })
}

/// Plot-ready CSV: `set_index,alarmed,alarm_index`.
pub fn write_sweep_csv(path: impl AsRef<Path>, bitmap: &SweepBitmap) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "set_index,alarmed,alarm_index")?;
    for s in &bitmap.sets {
        writeln!(
            w,
            "{},{},{}",
            s.set_index,
            u8::from(s.alarmed),
            s.alarm_index.map(|k| k.to_string()).unwrap_or_default()
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Noise / false-alarm curve
// ---------------------------------------------------------------------------

/// A ladder of noise intensities applied to one attack-free base
/// scenario. The grid seed replaces the base scenario's own seed; each
/// (level, repetition) pair derives its own stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FarGrid {
    pub period_us: u64,
    pub detector: DetectorConfig,
    pub base: ScenarioSpec,
    pub traces_per_level: u32,
    pub seed: u64,
    pub levels: Vec<NoiseSpec>,
}

impl FarGrid {
    pub fn validate(&self) -> Result<()> {
        if self.period_us < MIN_PERIOD_US {
            return Err(Error::InvalidSpec(format!(
                "period_us must be >= {MIN_PERIOD_US}, got {}",
                self.period_us
            )));
        }
        self.detector.validate()?;
        if self.base.attack.is_some() {
            return Err(Error::InvalidSpec(
                "false-alarm grids need an attack-free base scenario".into(),
            ));
        }
        self.base.validate()?;
        if self.traces_per_level == 0 {
            return Err(Error::InvalidSpec("traces_per_level must be >= 1".into()));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidSpec("noise grid has no levels".into()));
        }
        for level in &self.levels {
            level.validate()?;
        }
        Ok(())
    }
}

/// False-alarm statistics at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarPoint {
    pub level: u32,
    pub profile: String,
    pub budget: f64,
    pub burst_rate: f64,
    pub burst_miss_mean: f64,
    pub burst_len_mean: f64,
    pub traces: u64,
    pub false_alarms: u64,
    pub quiet_samples: u64,
    pub far_per_sample: f64,
    pub far_per_trace: f64,
}

/// Measure the false-alarm rate at every noise level of the grid.
pub fn noise_far_curve(grid: &FarGrid) -> Result<Vec<FarPoint>> {
    grid.validate()?;

    let jobs: Vec<(usize, u32)> = (0..grid.levels.len())
        .flat_map(|l| (0..grid.traces_per_level).map(move |r| (l, r)))
        .collect();

    let outcomes: Vec<(Option<u64>, u64)> = jobs
        .par_iter()
        .map(|&(level, rep)| {
            let mut scenario = grid.base.clone();
            scenario.noise = Some(grid.levels[level].clone());
            scenario.seed = mix_seed(mix_seed(grid.seed, level as u64), rep as u64);
            let (trace, _) = generate_trace(&scenario, grid.period_us)?;
            Ok((
                detection_index(&grid.detector, &trace)?,
                trace.len() as u64,
            ))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(grid.levels.len());
    for (level, noise) in grid.levels.iter().enumerate() {
        let mut alarms = 0u64;
        let mut exposure = 0u64;
        for (&(l, _), &(alarm, len)) in jobs.iter().zip(&outcomes) {
            if l != level {
                continue;
            }
            match alarm {
                Some(k) => {
                    alarms += 1;
                    exposure += k;
                }
                None => exposure += len,
            }
        }
        points.push(FarPoint {
            level: level as u32,
            profile: noise.profile.to_string(),
            budget: noise.budget(),
            burst_rate: noise.burst_rate,
            burst_miss_mean: noise.burst_miss_mean,
            burst_len_mean: noise.burst_len_mean,
            traces: grid.traces_per_level as u64,
            false_alarms: alarms,
            quiet_samples: exposure,
            far_per_sample: alarms as f64 / exposure as f64,
            far_per_trace: alarms as f64 / grid.traces_per_level as f64,
        });
    }
    Ok(points)
}

/// Plot-ready CSV, one row per noise level.
pub fn write_far_curve(path: impl AsRef<Path>, points: &[FarPoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(
        w,
        "level,profile,budget,burst_rate,burst_miss_mean,burst_len_mean,traces,\
         false_alarms,quiet_samples,far_per_sample,far_per_trace"
    )?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.level,
            p.profile,
            p.budget,
            p.burst_rate,
            p.burst_miss_mean,
            p.burst_len_mean,
            p.traces,
            p.false_alarms,
            p.quiet_samples,
            p.far_per_sample,
            p.far_per_trace
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Corpus and grid files
// ---------------------------------------------------------------------------

fn parse_detector_entry(config: &mut DetectorConfig, path: &Path, e: &KvEntry) -> Result<bool> {
    let Some(field) = e.key.strip_prefix("detector.") else {
        return Ok(false);
    };
    let bad = |what: &str| spec_file_error(path, e.line, format!("bad {what} {:?}", e.value));
    match field {
        "beta" => config.beta = e.value.parse().map_err(|_| bad("detector.beta"))?,
        "mu0" => config.mu_a_init = e.value.parse().map_err(|_| bad("detector.mu0"))?,
        "tau" => config.tau_e = e.value.parse().map_err(|_| bad("detector.tau"))?,
        "compare" => {
            config.comparison = e
                .value
                .parse::<Comparison>()
                .map_err(|_| bad("detector.compare"))?
        }
        other => {
            return Err(spec_file_error(
                path,
                e.line,
                format!("unknown key detector.{other}"),
            ))
        }
    }
    Ok(true)
}

fn detector_to_kv(config: &DetectorConfig) -> Vec<(String, String)> {
    vec![
        ("detector.beta".into(), config.beta.to_string()),
        ("detector.mu0".into(), config.mu_a_init.to_string()),
        ("detector.tau".into(), config.tau_e.to_string()),
        ("detector.compare".into(), config.comparison.to_string()),
    ]
}

/// Read a corpus description:
///
/// ```text
/// period_us = 100
/// detector.beta = 0.05
/// scenario.fr.attack.family = flush-reload
/// scenario.fr.repetitions = 1000
/// ```
///
/// Scenario blocks use the same keys as standalone scenario files under
/// a `scenario.<name>.` prefix, plus `repetitions` (default 1).
/// Scenarios appear in the report in first-mention order.
pub fn read_corpus_file(path: impl AsRef<Path>) -> Result<CorpusSpec> {
    let path = path.as_ref();
    let entries = parse_kv_file(path)?;

    let mut period_us = 100u64;
    let mut detector = DetectorConfig::default();
    let mut names: Vec<String> = Vec::new();
    let mut scenario_entries: Vec<KvEntry> = Vec::new();
    let mut repetitions: Vec<(String, usize, u32)> = Vec::new();

    for e in &entries {
        if e.key == "period_us" {
            period_us = e
                .value
                .parse()
                .map_err(|_| spec_file_error(path, e.line, format!("bad period_us {:?}", e.value)))?;
        } else if parse_detector_entry(&mut detector, path, e)? {
        } else if let Some(rest) = e.key.strip_prefix("scenario.") {
            let Some((name, field)) = rest.split_once('.') else {
                return Err(spec_file_error(
                    path,
                    e.line,
                    format!("expected scenario.<name>.<key>, got {:?}", e.key),
                ));
            };
            if !valid_name(name) {
                return Err(spec_file_error(
                    path,
                    e.line,
                    format!("bad scenario name {name:?}"),
                ));
            }
            if !names.iter().any(|n| n == name) {
                names.push(name.to_string());
            }
            if field == "repetitions" {
                let reps: u32 = e.value.parse().map_err(|_| {
                    spec_file_error(path, e.line, format!("bad repetitions {:?}", e.value))
                })?;
                repetitions.push((name.to_string(), e.line, reps));
            } else {
                scenario_entries.push(e.clone());
            }
        } else {
            return Err(spec_file_error(
                path,
                e.line,
                format!("unknown key {:?}", e.key),
            ));
        }
    }

    if names.is_empty() {
        return Err(Error::InvalidSpec(format!(
            "{} defines no scenarios",
            path.display()
        )));
    }

    let mut corpus_entries = Vec::with_capacity(names.len());
    for name in &names {
        let prefix = format!("scenario.{name}.");
        let scenario = scenario_from_entries(path, &scenario_entries, &prefix)?;
        let mut reps = 1u32;
        for (rep_name, line, value) in &repetitions {
            if rep_name == name {
                if *value == 0 {
                    return Err(spec_file_error(path, *line, "repetitions must be >= 1"));
                }
                reps = *value;
            }
        }
        corpus_entries.push(CorpusEntry {
            name: name.clone(),
            scenario,
            repetitions: reps,
        });
    }

    let spec = CorpusSpec {
        period_us,
        detector,
        entries: corpus_entries,
    };
    spec.validate()?;
    Ok(spec)
}

/// Write a corpus that [`read_corpus_file`] loads back equal.
pub fn write_corpus_file(path: impl AsRef<Path>, spec: &CorpusSpec) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "period_us = {}", spec.period_us)?;
    for (k, v) in detector_to_kv(&spec.detector) {
        writeln!(w, "{k} = {v}")?;
    }
    for entry in &spec.entries {
        writeln!(w)?;
        writeln!(w, "scenario.{}.repetitions = {}", entry.name, entry.repetitions)?;
        for (k, v) in scenario_to_kv(&entry.scenario) {
            writeln!(w, "scenario.{}.{k} = {v}", entry.name)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a noise-grid description:
///
/// ```text
/// period_us = 100
/// traces_per_level = 500
/// seed = 7
/// base.workload = rsa-like
/// level.0.profile = randmem-like
/// level.0.budget = 150
/// level.1.burst_rate = 2
/// level.1.miss_mean = 12
/// level.1.len_mean = 12
/// ```
///
/// Levels are numbered contiguously from 0. Each level is either a
/// profile (optionally with a `budget` to scale its burst rate) or an
/// explicit `burst_rate`/`miss_mean`/`len_mean` triple.
pub fn read_far_grid_file(path: impl AsRef<Path>) -> Result<FarGrid> {
    let path = path.as_ref();
    let entries = parse_kv_file(path)?;

    let mut period_us = 100u64;
    let mut traces_per_level = 500u32;
    let mut seed = 0u64;
    let mut detector = DetectorConfig::default();
    let mut base_entries: Vec<KvEntry> = Vec::new();

    #[derive(Default)]
    struct LevelDraft {
        first_line: usize,
        profile: Option<NoiseProfile>,
        budget: Option<f64>,
        burst_rate: Option<f64>,
        miss_mean: Option<f64>,
        len_mean: Option<f64>,
    }
    let mut drafts: std::collections::BTreeMap<u32, LevelDraft> = std::collections::BTreeMap::new();

    for e in &entries {
        let bad = |what: &str| spec_file_error(path, e.line, format!("bad {what} {:?}", e.value));
        if e.key == "period_us" {
            period_us = e.value.parse().map_err(|_| bad("period_us"))?;
        } else if e.key == "traces_per_level" {
            traces_per_level = e.value.parse().map_err(|_| bad("traces_per_level"))?;
        } else if e.key == "seed" {
            seed = e.value.parse().map_err(|_| bad("seed"))?;
        } else if parse_detector_entry(&mut detector, path, e)? {
        } else if e.key.starts_with("base.") {
            base_entries.push(e.clone());
        } else if let Some(rest) = e.key.strip_prefix("level.") {
            let Some((index, field)) = rest.split_once('.') else {
                return Err(spec_file_error(
                    path,
                    e.line,
                    format!("expected level.<index>.<key>, got {:?}", e.key),
                ));
            };
            let index: u32 = index.parse().map_err(|_| {
                spec_file_error(path, e.line, format!("bad level index {index:?}"))
            })?;
            let draft = drafts.entry(index).or_default();
            if draft.first_line == 0 {
                draft.first_line = e.line;
            }
            match field {
                "profile" => {
                    draft.profile = Some(e.value.parse().map_err(|_| bad("level profile"))?)
                }
                "budget" => draft.budget = Some(e.value.parse().map_err(|_| bad("level budget"))?),
                "burst_rate" => {
                    draft.burst_rate = Some(e.value.parse().map_err(|_| bad("level burst_rate"))?)
                }
                "miss_mean" => {
                    draft.miss_mean = Some(e.value.parse().map_err(|_| bad("level miss_mean"))?)
                }
                "len_mean" => {
                    draft.len_mean = Some(e.value.parse().map_err(|_| bad("level len_mean"))?)
                }
                other => {
                    return Err(spec_file_error(
                        path,
                        e.line,
                        format!("unknown key level.{index}.{other}"),
                    ))
                }
            }
        } else {
            return Err(spec_file_error(
                path,
                e.line,
                format!("unknown key {:?}", e.key),
            ));
        }
    }

    let base = scenario_from_entries(path, &base_entries, "base.")?;

    let mut levels = Vec::with_capacity(drafts.len());
    for (want, (index, draft)) in drafts.iter().enumerate() {
        if *index as usize != want {
            return Err(spec_file_error(
                path,
                draft.first_line,
                format!("level indices must be contiguous from 0; expected {want}, got {index}"),
            ));
        }
        let Some(profile) = draft.profile else {
            return Err(spec_file_error(
                path,
                draft.first_line,
                format!("level {index} needs a profile"),
            ));
        };
        let has_override =
            [draft.burst_rate, draft.miss_mean, draft.len_mean].iter().any(Option::is_some);
        if draft.budget.is_some() && has_override {
            return Err(spec_file_error(
                path,
                draft.first_line,
                format!("level {index} mixes budget with explicit shape keys"),
            ));
        }
        let mut noise = match draft.budget {
            Some(budget) => NoiseSpec::with_budget(profile, budget),
            None => NoiseSpec::profile_defaults(profile),
        };
        if let Some(v) = draft.burst_rate {
            noise.burst_rate = v;
        }
        if let Some(v) = draft.miss_mean {
            noise.burst_miss_mean = v;
        }
        if let Some(v) = draft.len_mean {
            noise.burst_len_mean = v;
        }
        levels.push(noise);
    }

    let grid = FarGrid {
        period_us,
        detector,
        base,
        traces_per_level,
        seed,
        levels,
    };
    grid.validate()?;
    Ok(grid)
}
