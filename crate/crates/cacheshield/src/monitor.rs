//! The monitoring service: a sample source feeding one detector on a
//! dedicated thread, with lifecycle events streamed to the caller.
//!
//! The loop reads one sample per period, updates the detector, and emits
//! [`MonitorEvent`]s for the things a supervisor cares about: start,
//! alarm, pause/resume, target exit, and periodic overhead reports. Two
//! things pause sampling: an explicit [`MonitorHandle::pause`], and the
//! victim going idle (cycles below `idle_threshold_cycles` for
//! `idle_intervals_to_pause` consecutive intervals). While paused the
//! loop consumes nothing — and crucially the detector keeps its state, so
//! an attacker cannot launder the statistic by making the victim look
//! idle. Pausing therefore never changes what the detector sees, only
//! when it sees it: on a replayed trace the alarm lands at exactly the
//! same sample index as a standalone detector run.
//!
//! Alarms latch: the configured [`Reaction`] fires exactly once per run,
//! off the sampling loop, and a failing reaction is reported as an
//! `error` event rather than killing the monitor. The detector keeps
//! updating after the alarm; the event stream just doesn't repeat itself.
//!
//! Overhead is self-measured: each interval's cost is the source's own
//! read time (pacing sleeps excluded) plus detector update time, and
//! `utilization` is that mean divided by the period.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::detector::{Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::source::{open_source, SampleSource, SourceBackend, SourceDescriptor};

/// What to do when the detector raises an alarm.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Reaction {
    /// The alarm event itself is the whole response.
    #[default]
    LogOnly,
    /// Send SIGUSR1 to the monitored process so it can re-key, add
    /// noise, or otherwise defend itself.
    NotifyTarget,
    /// Send SIGSTOP to the monitored process: leak nothing more, let a
    /// human decide.
    StopTarget,
    /// Run a command with the alarm described in CACHESHIELD_ALARM_*
    /// environment variables.
    ExecHook(PathBuf),
}

impl FromStr for Reaction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" | "log-only" => Ok(Reaction::LogOnly),
            "notify" | "notify-target" => Ok(Reaction::NotifyTarget),
            "stop" | "stop-target" => Ok(Reaction::StopTarget),
            _ => match s.strip_prefix("hook:") {
                Some(path) if !path.is_empty() => Ok(Reaction::ExecHook(PathBuf::from(path))),
                _ => Err(Error::InvalidConfig(format!(
                    "unknown reaction {s:?}; expected log, notify, stop, or hook:PATH"
                ))),
            },
        }
    }
}

impl std::fmt::Display for Reaction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reaction::LogOnly => f.write_str("log-only"),
            Reaction::NotifyTarget => f.write_str("notify-target"),
            Reaction::StopTarget => f.write_str("stop-target"),
            Reaction::ExecHook(path) => write!(f, "hook:{}", path.display()),
        }
    }
}

/// Everything a monitor run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    pub source: SourceDescriptor,
    pub detector: DetectorConfig,
    /// Cycles per interval below which the victim counts as inactive.
    pub idle_threshold_cycles: u64,
    /// Consecutive inactive intervals before the monitor pauses itself.
    pub idle_intervals_to_pause: u32,
    pub reaction: Reaction,
    /// Emit an overhead report every this many samples. The final report
    /// at shutdown is unconditional.
    pub overhead_report_every: Option<u64>,
}

impl MonitorConfig {
    pub fn new(source: SourceDescriptor, detector: DetectorConfig) -> Self {
        MonitorConfig {
            source,
            detector,
            idle_threshold_cycles: 1_000,
            idle_intervals_to_pause: 50,
            reaction: Reaction::LogOnly,
            overhead_report_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.detector.validate()?;
        if self.idle_intervals_to_pause == 0 {
            return Err(Error::InvalidConfig(
                "idle_intervals_to_pause must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Kinds of [`MonitorEvent`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Started,
    Alarm,
    Paused,
    Resumed,
    TargetExited,
    OverheadReport,
    /// A non-sample failure: a reaction that could not run, or the
    /// source error that ended the stream.
    Error,
}

/// Alarm details carried on an `alarm` event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmInfo {
    /// 1-based index of the sample that tripped the threshold.
    pub sample_index: u64,
    /// Misses in that interval.
    pub misses: u64,
    /// Statistic, threshold, and attack-mean estimate at the alarm.
    pub g: f64,
    pub h: f64,
    pub mu_a: f64,
}

/// Loop-time distribution in fixed microsecond buckets; the last bucket
/// counts everything past the largest edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopHistogram {
    pub edges_us: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Upper bucket edges for [`LoopHistogram`], in microseconds.
pub const LOOP_BUCKET_EDGES_US: [f64; 10] =
    [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0];

/// Self-measured cost of the sampling loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadStats {
    /// Samples covered by this report.
    pub samples: u64,
    pub period_us: u64,
    /// Mean time to read the counters and update the detector, per
    /// interval, excluding pacing sleeps.
    pub mean_loop_us: f64,
    /// `mean_loop_us / period_us`.
    pub utilization: f64,
    pub histogram: LoopHistogram,
}

/// Payload attached to events that carry one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventPayload {
    Alarm(AlarmInfo),
    Overhead(OverheadStats),
    Message(String),
}

/// One record in the monitor's event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEvent {
    pub kind: EventKind,
    /// Timestamp of the sample current when the event fired; events are
    /// emitted in non-decreasing timestamp order.
    pub t_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<EventPayload>,
}

impl MonitorEvent {
    pub fn alarm_info(&self) -> Option<&AlarmInfo> {
        match &self.payload {
            Some(EventPayload::Alarm(info)) => Some(info),
            _ => None,
        }
    }

    pub fn overhead(&self) -> Option<&OverheadStats> {
        match &self.payload {
            Some(EventPayload::Overhead(stats)) => Some(stats),
            _ => None,
        }
    }
}

/// Write an event log as JSON lines.
pub fn write_events(path: impl AsRef<Path>, events: &[MonitorEvent]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for event in events {
        let line = serde_json::to_string(event)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a JSON-lines event log, reporting the first bad line by number.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<MonitorEvent>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            return Err(Error::MalformedEvents {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: "empty line".into(),
            });
        }
        let event = serde_json::from_str(&line).map_err(|e| Error::MalformedEvents {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

// ---------------------------------------------------------------------------
// The running monitor
// ---------------------------------------------------------------------------

enum ControlMsg {
    Pause,
    Resume,
    Stop,
}

struct ControlReq {
    msg: ControlMsg,
    reply: Sender<Result<()>>,
}

/// A handle to a running monitor: an event stream plus pause/resume/stop
/// controls. Dropping the handle stops the monitor.
pub struct MonitorHandle {
    events: Receiver<MonitorEvent>,
    control: Sender<ControlReq>,
    thread: Option<JoinHandle<()>>,
}

impl MonitorHandle {
    /// Next event, blocking; `None` once the monitor has shut down and
    /// the stream is drained.
    pub fn next_event(&self) -> Option<MonitorEvent> {
        self.events.recv().ok()
    }

    fn request(&self, msg: ControlMsg) -> Result<()> {
        let (reply, ack) = mpsc::channel();
        self.control
            .send(ControlReq { msg, reply })
            .map_err(|_| Error::MonitorShutDown)?;
        ack.recv().map_err(|_| Error::MonitorShutDown)?
    }

    /// Suspend sampling after the current interval. Idempotent; the ack
    /// returns once the loop is parked.
    pub fn pause(&self) -> Result<()> {
        self.request(ControlMsg::Pause)
    }

    /// Restart a paused loop. Detector state carries over untouched.
    pub fn resume(&self) -> Result<()> {
        self.request(ControlMsg::Resume)
    }

    /// Shut down cleanly; the final overhead report still gets emitted.
    pub fn stop(&self) -> Result<()> {
        self.request(ControlMsg::Stop)
    }

    /// Drain the monitor to completion, resuming it whenever it pauses
    /// itself, and return the full event log.
    pub fn collect(mut self) -> Vec<MonitorEvent> {
        let mut events = Vec::new();
        while let Ok(event) = self.events.recv() {
            let paused = event.kind == EventKind::Paused;
            events.push(event);
            if paused {
                let _ = self.resume();
            }
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
        events
    }
}

impl Drop for MonitorHandle {
    fn drop(&mut self) {
        if let Some(thread) = self.thread.take() {
            let (reply, _ack) = mpsc::channel();
            let _ = self.control.send(ControlReq {
                msg: ControlMsg::Stop,
                reply,
            });
            let _ = thread.join();
        }
    }
}

/// Open the configured source and start the sampling loop on its own
/// thread. Source and config problems surface here, synchronously.
pub fn run_monitor(config: MonitorConfig) -> Result<MonitorHandle> {
    config.validate()?;
    let detector = Detector::new(config.detector)?;
    let source = open_source(&config.source)?;
    let (event_tx, event_rx) = mpsc::channel();
    let (control_tx, control_rx) = mpsc::channel();
    let thread = thread::Builder::new()
        .name("cacheshield-monitor".into())
        .spawn(move || monitor_loop(config, source, detector, event_tx, control_rx))?;
    Ok(MonitorHandle {
        events: event_rx,
        control: control_tx,
        thread: Some(thread),
    })
}

struct Emitter {
    tx: Sender<MonitorEvent>,
    /// True while someone is still listening.
    connected: bool,
}

impl Emitter {
    fn send(&mut self, kind: EventKind, t_us: u64, payload: Option<EventPayload>) {
        if self.connected {
            self.connected = self.tx.send(MonitorEvent { kind, t_us, payload }).is_ok();
        }
    }
}

struct OverheadAccum {
    period_us: u64,
    total_us: f64,
    samples: u64,
    counts: [u64; LOOP_BUCKET_EDGES_US.len() + 1],
}

impl OverheadAccum {
    fn new(period_us: u64) -> Self {
        OverheadAccum {
            period_us,
            total_us: 0.0,
            samples: 0,
            counts: [0; LOOP_BUCKET_EDGES_US.len() + 1],
        }
    }

    fn record(&mut self, loop_us: f64) {
        self.total_us += loop_us;
        self.samples += 1;
        let bucket = LOOP_BUCKET_EDGES_US
            .iter()
            .position(|&edge| loop_us <= edge)
            .unwrap_or(LOOP_BUCKET_EDGES_US.len());
        self.counts[bucket] += 1;
    }

    fn stats(&self) -> OverheadStats {
        let mean_loop_us = if self.samples == 0 {
            0.0
        } else {
            self.total_us / self.samples as f64
        };
        OverheadStats {
            samples: self.samples,
            period_us: self.period_us,
            mean_loop_us,
            utilization: mean_loop_us / self.period_us as f64,
            histogram: LoopHistogram {
                edges_us: LOOP_BUCKET_EDGES_US.to_vec(),
                counts: self.counts.to_vec(),
            },
        }
    }
}

struct AlarmCtx {
    info: AlarmInfo,
    t_us: u64,
}

enum Ending {
    TargetGone,
    Stopped,
    Failed(Error),
}

enum PauseOutcome {
    Resumed,
    Stopped,
}

fn monitor_loop(
    config: MonitorConfig,
    mut source: Box<dyn SampleSource>,
    mut detector: Detector,
    event_tx: Sender<MonitorEvent>,
    control: Receiver<ControlReq>,
) {
    let target_pid = match &config.source.backend {
        SourceBackend::Live { pid } => Some(*pid),
        _ => None,
    };
    let (react_tx, react_rx) = mpsc::channel::<AlarmCtx>();
    let (fail_tx, fail_rx) = mpsc::channel::<String>();
    let reaction = config.reaction.clone();
    let worker = thread::spawn(move || reaction_worker(reaction, target_pid, react_rx, fail_tx));

    let mut emitter = Emitter {
        tx: event_tx,
        connected: true,
    };
    let mut overhead = OverheadAccum::new(source.period_us());
    let mut last_t = 0u64;
    let mut sample_index = 0u64;
    let mut idle_run = 0u32;
    let mut latched = false;

    emitter.send(EventKind::Started, 0, None);

    let ending = 'run: loop {
        while let Ok(req) = control.try_recv() {
            match req.msg {
                ControlMsg::Pause => {
                    emitter.send(EventKind::Paused, last_t, None);
                    let _ = req.reply.send(Ok(()));
                    match paused_wait(&control, &mut emitter, last_t) {
                        PauseOutcome::Resumed => {}
                        PauseOutcome::Stopped => break 'run Ending::Stopped,
                    }
                }
                ControlMsg::Resume => {
                    let _ = req.reply.send(Err(Error::NotPaused));
                }
                ControlMsg::Stop => {
                    let _ = req.reply.send(Ok(()));
                    break 'run Ending::Stopped;
                }
            }
        }
        for failure in fail_rx.try_iter() {
            emitter.send(
                EventKind::Error,
                last_t,
                Some(EventPayload::Message(failure)),
            );
        }
        if !emitter.connected {
            // Listener gone and no Stop seen (it raced the channel):
            // nothing we produce can be observed any more.
            break Ending::Stopped;
        }

        match source.next_sample() {
            Ok(Some(sample)) => {
                let t0 = Instant::now();
                let decision = detector.update(&sample);
                sample_index += 1;
                last_t = sample.t_us;

                if decision.alarm && !latched {
                    latched = true;
                    let info = AlarmInfo {
                        sample_index,
                        misses: sample.misses,
                        g: decision.g,
                        h: decision.h,
                        mu_a: decision.mu_a,
                    };
                    emitter.send(
                        EventKind::Alarm,
                        sample.t_us,
                        Some(EventPayload::Alarm(info)),
                    );
                    let _ = react_tx.send(AlarmCtx {
                        info,
                        t_us: sample.t_us,
                    });
                }

                if sample.cycles < config.idle_threshold_cycles {
                    idle_run += 1;
                } else {
                    idle_run = 0;
                }

                let compute_us = t0.elapsed().as_secs_f64() * 1e6;
                overhead.record(source.status().last_read_us + compute_us);

                if let Some(every) = config.overhead_report_every {
                    if every > 0 && sample_index.is_multiple_of(every) {
                        emitter.send(
                            EventKind::OverheadReport,
                            last_t,
                            Some(EventPayload::Overhead(overhead.stats())),
                        );
                    }
                }

                if idle_run >= config.idle_intervals_to_pause {
                    idle_run = 0;
                    emitter.send(EventKind::Paused, last_t, None);
                    match paused_wait(&control, &mut emitter, last_t) {
                        PauseOutcome::Resumed => {}
                        PauseOutcome::Stopped => break Ending::Stopped,
                    }
                }
            }
            Ok(None) => break Ending::TargetGone,
            Err(Error::TargetExited) => break Ending::TargetGone,
            Err(e) => break Ending::Failed(e),
        }
    };

    // Let pending reactions finish, then report anything they tripped on.
    drop(react_tx);
    let _ = worker.join();
    for failure in fail_rx.try_iter() {
        emitter.send(
            EventKind::Error,
            last_t,
            Some(EventPayload::Message(failure)),
        );
    }

    emitter.send(
        EventKind::OverheadReport,
        last_t,
        Some(EventPayload::Overhead(overhead.stats())),
    );
    match ending {
        Ending::TargetGone => emitter.send(EventKind::TargetExited, last_t, None),
        Ending::Stopped => {}
        Ending::Failed(e) => emitter.send(
            EventKind::Error,
            last_t,
            Some(EventPayload::Message(e.to_string())),
        ),
    }
}

/// Park until resumed or stopped. Nothing is read from the source in
/// here — that is the whole point of pausing.
fn paused_wait(
    control: &Receiver<ControlReq>,
    emitter: &mut Emitter,
    last_t: u64,
) -> PauseOutcome {
    loop {
        match control.recv() {
            Ok(req) => match req.msg {
                ControlMsg::Resume => {
                    emitter.send(EventKind::Resumed, last_t, None);
                    let _ = req.reply.send(Ok(()));
                    return PauseOutcome::Resumed;
                }
                // Already paused; acknowledge and stay put.
                ControlMsg::Pause => {
                    let _ = req.reply.send(Ok(()));
                }
                ControlMsg::Stop => {
                    let _ = req.reply.send(Ok(()));
                    return PauseOutcome::Stopped;
                }
            },
            Err(_) => return PauseOutcome::Stopped,
        }
    }
}

fn reaction_worker(
    reaction: Reaction,
    target_pid: Option<u32>,
    alarms: Receiver<AlarmCtx>,
    failures: Sender<String>,
) {
    for alarm in alarms {
        if let Err(reason) = run_reaction(&reaction, target_pid, &alarm) {
            let _ = failures.send(reason);
        }
    }
}

fn run_reaction(
    reaction: &Reaction,
    target_pid: Option<u32>,
    alarm: &AlarmCtx,
) -> std::result::Result<(), String> {
    match reaction {
        Reaction::LogOnly => Ok(()),
        Reaction::NotifyTarget => signal_target(target_pid, SignalKind::Notify),
        Reaction::StopTarget => signal_target(target_pid, SignalKind::Stop),
        Reaction::ExecHook(path) => {
            let mut cmd = Command::new(path);
            cmd.env("CACHESHIELD_ALARM_SAMPLE_INDEX", alarm.info.sample_index.to_string())
                .env("CACHESHIELD_ALARM_T_US", alarm.t_us.to_string())
                .env("CACHESHIELD_ALARM_G", alarm.info.g.to_string())
                .env("CACHESHIELD_ALARM_H", alarm.info.h.to_string())
                .env("CACHESHIELD_ALARM_MU_A", alarm.info.mu_a.to_string());
            if let Some(pid) = target_pid {
                cmd.env("CACHESHIELD_TARGET_PID", pid.to_string());
            }
            match cmd.status() {
                Ok(status) if status.success() => Ok(()),
                Ok(status) => Err(format!(
                    "reaction hook {} exited with {status}",
                    path.display()
                )),
                Err(e) => Err(format!("reaction hook {} failed to run: {e}", path.display())),
            }
        }
    }
}

enum SignalKind {
    Notify,
    Stop,
}

impl SignalKind {
    fn name(&self) -> &'static str {
        match self {
            SignalKind::Notify => "notify-target",
            SignalKind::Stop => "stop-target",
        }
    }
}

#[cfg(unix)]
fn signal_target(pid: Option<u32>, kind: SignalKind) -> std::result::Result<(), String> {
    let pid = pid.ok_or_else(|| {
        format!("reaction {}: no live target process to signal", kind.name())
    })?;
    let signal = match kind {
        SignalKind::Notify => libc::SIGUSR1,
        SignalKind::Stop => libc::SIGSTOP,
    };
    if unsafe { libc::kill(pid as libc::pid_t, signal) } == 0 {
        Ok(())
    } else {
        Err(format!(
            "reaction {}: kill({pid}) failed: {}",
            kind.name(),
            std::io::Error::last_os_error()
        ))
    }
}

#[cfg(not(unix))]
fn signal_target(_pid: Option<u32>, kind: SignalKind) -> std::result::Result<(), String> {
    Err(format!(
        "reaction {}: process signals are not supported on this platform",
        kind.name()
    ))
}

// ---------------------------------------------------------------------------
// Protecting a spawned process
// ---------------------------------------------------------------------------

/// Result of running a command under monitoring.
#[derive(Debug)]
pub struct ProtectedOutcome {
    pub exit_status: ExitStatus,
    pub events: Vec<MonitorEvent>,
}

/// Spawn `command` and monitor it with live counters for its whole
/// lifetime. The descriptor inside `config` is replaced with a live
/// source for the child (its period is kept). Idle auto-pauses are
/// resumed automatically when the child accumulates CPU time again.
pub fn attach_protected(command: &[String], config: &MonitorConfig) -> Result<ProtectedOutcome> {
    if command.is_empty() {
        return Err(Error::InvalidConfig("empty command".into()));
    }
    // Fail before spawning anything if this host can't do live counters.
    crate::source::probe_live_counters().map_err(|e| match e {
        Error::CountersUnavailable { reason } => Error::PlatformUnsupported(reason),
        other => other,
    })?;

    let mut child = Command::new(&command[0])
        .args(&command[1..])
        .spawn()
        .map_err(|e| Error::SpawnFailure {
            command: command.join(" "),
            source: e,
        })?;

    let mut cfg = config.clone();
    cfg.source = SourceDescriptor {
        backend: SourceBackend::Live { pid: child.id() },
        period_us: config.source.period_us,
    };
    let handle = match run_monitor(cfg) {
        Ok(handle) => handle,
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(e);
        }
    };

    let pid = child.id();
    let (exit_status, events) = drive(handle, pid, Some(&mut child));
    let exit_status = match exit_status {
        Some(status) => status,
        None => child.wait()?,
    };
    Ok(ProtectedOutcome { exit_status, events })
}

/// Drain a live monitor of an already-running process, resuming idle
/// pauses once the target accumulates CPU time again. Returns the full
/// event log when the stream ends.
pub fn drive_with_idle_resume(handle: MonitorHandle, pid: u32) -> Vec<MonitorEvent> {
    drive(handle, pid, None).1
}

/// Drive the event stream while watching the target: reap a child when
/// it exits (so the live source sees the pid disappear) and resume idle
/// pauses when the process burns CPU again.
fn drive(
    handle: MonitorHandle,
    pid: u32,
    mut child: Option<&mut Child>,
) -> (Option<ExitStatus>, Vec<MonitorEvent>) {
    let mut events = Vec::new();
    let mut paused = false;
    let mut exit_status = None;
    let mut last_cpu = proc_cpu_ticks(pid).unwrap_or(0);
    loop {
        match handle.events.recv_timeout(Duration::from_millis(20)) {
            Ok(event) => {
                match event.kind {
                    EventKind::Paused => paused = true,
                    EventKind::Resumed => paused = false,
                    _ => {}
                }
                events.push(event);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        if exit_status.is_none() {
            if let Some(child) = child.as_deref_mut() {
                if let Ok(Some(status)) = child.try_wait() {
                    exit_status = Some(status);
                }
            }
        }
        if paused {
            match proc_cpu_ticks(pid) {
                Some(cpu) if cpu > last_cpu => {
                    last_cpu = cpu;
                    paused = false;
                    let _ = handle.resume();
                }
                Some(_) => {}
                // Process record gone: nothing will ever resume us.
                None => {
                    let _ = handle.stop();
                }
            }
        } else if let Some(cpu) = proc_cpu_ticks(pid) {
            last_cpu = last_cpu.max(cpu);
        }
    }
    (exit_status, events)
}

/// Total CPU ticks (utime + stime) of a process, or `None` once it is
/// gone. Linux-only; elsewhere there is no live backend to supervise.
#[cfg(target_os = "linux")]
fn proc_cpu_ticks(pid: u32) -> Option<u64> {
    let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // Skip past the parenthesised command name; it may contain spaces.
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let utime: u64 = fields.get(11)?.parse().ok()?;
    let stime: u64 = fields.get(12)?.parse().ok()?;
    Some(utime + stime)
}

#[cfg(not(target_os = "linux"))]
fn proc_cpu_ticks(_pid: u32) -> Option<u64> {
    None
}
