//! Sample sources: where the detector's counter stream comes from.
//!
//! Three interchangeable backends produce [`CounterSample`] streams:
//!
//! - **live** — per-process hardware counters on Linux (`perf_event_open`
//!   with the generalized `CACHE_MISSES` and `CPU_CYCLES` events, counting
//!   user-space events of the target pid only). Other platforms get a
//!   clean `PlatformUnsupported` error; everything else in the crate works
//!   without hardware access.
//! - **replay** — a recorded trace file, emitted verbatim and unpaced.
//!   Reaching the end of the file is normal termination, not an error.
//! - **synthetic** — a simulated scenario, generated up front and paced
//!   like a live source so demos behave like the real thing without
//!   privileges. Sample contents (including timestamps, which follow the
//!   scenario's virtual clock) are bit-identical to
//!   [`generate_trace`](crate::sim::generate_trace); pacing only controls
//!   delivery rate.
//!
//! Paced sources sleep to the next absolute period boundary, then spin
//! the final stretch (sleeping to the exact boundary is hopeless at
//! microsecond periods on a tickless kernel). When the consumer shows up
//! after the boundary has already passed, that interval is recorded as a
//! deadline miss and the schedule re-anchors at the current instant — the
//! late sample keeps its true, longer interval; nothing is fabricated.
//! Time spent inside each read (excluding the pacing wait) is reported in
//! [`SourceStatus::last_read_us`] so monitoring overhead can be accounted
//! without charging the sleep to the sampler.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::detector::CounterSample;
use crate::error::{Error, Result};
use crate::sim::{generate_trace, ScenarioSpec};
use crate::trace::read_trace;
use crate::MIN_PERIOD_US;

/// Which backend a source reads from.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceBackend {
    /// Hardware counters of a running process.
    Live { pid: u32 },
    /// A recorded trace file.
    Replay { path: PathBuf },
    /// A simulated scenario.
    Synthetic { scenario: ScenarioSpec },
}

/// A backend plus the sampling period.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDescriptor {
    pub backend: SourceBackend,
    /// Microseconds between samples. Replay sources keep their recorded
    /// timestamps; the period then only feeds utilization math.
    pub period_us: u64,
}

impl SourceDescriptor {
    pub fn live(pid: u32) -> Self {
        SourceDescriptor {
            backend: SourceBackend::Live { pid },
            period_us: 100,
        }
    }

    pub fn replay(path: impl Into<PathBuf>) -> Self {
        SourceDescriptor {
            backend: SourceBackend::Replay { path: path.into() },
            period_us: 100,
        }
    }

    pub fn synthetic(scenario: ScenarioSpec) -> Self {
        SourceDescriptor {
            backend: SourceBackend::Synthetic { scenario },
            period_us: 100,
        }
    }

    pub fn with_period(mut self, period_us: u64) -> Self {
        self.period_us = period_us;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.period_us < MIN_PERIOD_US {
            return Err(Error::InvalidConfig(format!(
                "period_us must be >= {MIN_PERIOD_US}, got {}",
                self.period_us
            )));
        }
        if let SourceBackend::Synthetic { scenario } = &self.backend {
            scenario.validate()?;
        }
        Ok(())
    }
}

/// Counters a source keeps about itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceStatus {
    pub samples_emitted: u64,
    /// Intervals where the consumer arrived after the period boundary.
    /// Always zero for unpaced (replay) sources.
    pub deadline_misses: u64,
    /// False once a live target has exited. Virtual backends stay true.
    pub target_alive: bool,
    pub paced: bool,
    /// Time spent inside the most recent read, excluding the pacing wait.
    pub last_read_us: f64,
    /// Worst observed lateness past a period boundary.
    pub max_overshoot_us: f64,
}

/// A single-consumer stream of counter samples.
///
/// `Ok(None)` is end-of-stream (normal for replay and synthetic);
/// errors are real failures. Sources may be moved across threads before
/// the first read; they are not shareable.
pub trait SampleSource: Send {
    fn next_sample(&mut self) -> Result<Option<CounterSample>>;
    fn status(&self) -> SourceStatus;
    fn period_us(&self) -> u64;
}

/// Open the backend described by `desc`.
pub fn open_source(desc: &SourceDescriptor) -> Result<Box<dyn SampleSource>> {
    desc.validate()?;
    match &desc.backend {
        SourceBackend::Replay { path } => {
            Ok(Box::new(ReplaySource::open(path, desc.period_us)?))
        }
        SourceBackend::Synthetic { scenario } => {
            Ok(Box::new(SyntheticSource::new(scenario, desc.period_us)?))
        }
        SourceBackend::Live { pid } => open_live(*pid, desc.period_us),
    }
}

/// Check whether live counters work here at all, by opening both events
/// on the calling process and closing them again.
pub fn probe_live_counters() -> Result<()> {
    #[cfg(target_os = "linux")]
    {
        let _ = linux::PerfCounter::open(std::process::id(), linux::Event::CacheMisses)?;
        let _ = linux::PerfCounter::open(std::process::id(), linux::Event::CpuCycles)?;
        Ok(())
    }
    #[cfg(not(target_os = "linux"))]
    {
        Err(Error::PlatformUnsupported(
            "live counters need Linux perf_event".into(),
        ))
    }
}

#[cfg(target_os = "linux")]
fn open_live(pid: u32, period_us: u64) -> Result<Box<dyn SampleSource>> {
    Ok(Box::new(linux::LiveSource::open(pid, period_us)?))
}

#[cfg(not(target_os = "linux"))]
fn open_live(_pid: u32, _period_us: u64) -> Result<Box<dyn SampleSource>> {
    Err(Error::PlatformUnsupported(
        "live counters need Linux perf_event".into(),
    ))
}

// ---------------------------------------------------------------------------
// Pacing
// ---------------------------------------------------------------------------

/// Sleep-then-spin scheduler over absolute period boundaries.
#[derive(Debug)]
pub(crate) struct Pacer {
    period: Duration,
    deadline: Instant,
    pub misses: u64,
    pub max_overshoot_us: f64,
}

/// How close to the deadline the pacer switches from sleeping to
/// spinning. OS sleeps routinely overshoot by tens of microseconds,
/// which at a 100 us period would mean missing every single boundary.
const SPIN_SLACK: Duration = Duration::from_micros(200);

impl Pacer {
    pub fn new(period_us: u64) -> Self {
        let period = Duration::from_micros(period_us);
        Pacer {
            period,
            deadline: Instant::now() + period,
            misses: 0,
            max_overshoot_us: 0.0,
        }
    }

    /// Block until the next period boundary. Returns true when the
    /// boundary had already passed, in which case the schedule
    /// re-anchors at the current instant.
    pub fn wait(&mut self) -> bool {
        let now = Instant::now();
        if now >= self.deadline {
            let overshoot = now.duration_since(self.deadline).as_secs_f64() * 1e6;
            self.max_overshoot_us = self.max_overshoot_us.max(overshoot);
            self.misses += 1;
            self.deadline = now + self.period;
            return true;
        }
        let remaining = self.deadline - now;
        if remaining > SPIN_SLACK {
            std::thread::sleep(remaining - SPIN_SLACK);
        }
        while Instant::now() < self.deadline {
            std::hint::spin_loop();
        }
        self.deadline += self.period;
        false
    }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// Emits a recorded trace verbatim, as fast as the consumer asks.
pub struct ReplaySource {
    samples: Vec<CounterSample>,
    cursor: usize,
    period_us: u64,
    last_read_us: f64,
}

impl ReplaySource {
    pub fn open(path: impl AsRef<Path>, period_us: u64) -> Result<Self> {
        let (trace, _) = read_trace(path)?;
        Ok(ReplaySource {
            samples: trace.samples,
            cursor: 0,
            period_us,
            last_read_us: 0.0,
        })
    }
}

impl SampleSource for ReplaySource {
    fn next_sample(&mut self) -> Result<Option<CounterSample>> {
        let t0 = Instant::now();
        let sample = self.samples.get(self.cursor).copied();
        if sample.is_some() {
            self.cursor += 1;
        }
        self.last_read_us = t0.elapsed().as_secs_f64() * 1e6;
        Ok(sample)
    }

    fn status(&self) -> SourceStatus {
        SourceStatus {
            samples_emitted: self.cursor as u64,
            deadline_misses: 0,
            target_alive: true,
            paced: false,
            last_read_us: self.last_read_us,
            max_overshoot_us: 0.0,
        }
    }

    fn period_us(&self) -> u64 {
        self.period_us
    }
}

// ---------------------------------------------------------------------------
// Synthetic
// ---------------------------------------------------------------------------

/// Emits a simulated scenario at the configured real-time pace.
pub struct SyntheticSource {
    samples: Vec<CounterSample>,
    cursor: usize,
    period_us: u64,
    pacer: Pacer,
    last_read_us: f64,
}

impl SyntheticSource {
    pub fn new(scenario: &ScenarioSpec, period_us: u64) -> Result<Self> {
        let (trace, _) = generate_trace(scenario, period_us)?;
        Ok(SyntheticSource {
            samples: trace.samples,
            cursor: 0,
            period_us,
            pacer: Pacer::new(period_us),
            last_read_us: 0.0,
        })
    }
}

impl SampleSource for SyntheticSource {
    fn next_sample(&mut self) -> Result<Option<CounterSample>> {
        if self.cursor >= self.samples.len() {
            return Ok(None);
        }
        self.pacer.wait();
        let t0 = Instant::now();
        let sample = self.samples[self.cursor];
        self.cursor += 1;
        self.last_read_us = t0.elapsed().as_secs_f64() * 1e6;
        Ok(Some(sample))
    }

    fn status(&self) -> SourceStatus {
        SourceStatus {
            samples_emitted: self.cursor as u64,
            deadline_misses: self.pacer.misses,
            target_alive: true,
            paced: true,
            last_read_us: self.last_read_us,
            max_overshoot_us: self.pacer.max_overshoot_us,
        }
    }

    fn period_us(&self) -> u64 {
        self.period_us
    }
}

// ---------------------------------------------------------------------------
// Live (Linux perf_event)
// ---------------------------------------------------------------------------

#[cfg(target_os = "linux")]
mod linux {
    use super::*;
    use std::os::fd::{FromRawFd, OwnedFd};

    #[derive(Debug, Clone, Copy)]
    pub(super) enum Event {
        /// PERF_COUNT_HW_CACHE_MISSES: last-level cache misses as the
        /// kernel generalizes them for this machine.
        CacheMisses,
        /// PERF_COUNT_HW_CPU_CYCLES.
        CpuCycles,
    }

    impl Event {
        fn config(self) -> u64 {
            match self {
                Event::CpuCycles => 0,
                Event::CacheMisses => 3,
            }
        }

        fn name(self) -> &'static str {
            match self {
                Event::CacheMisses => "cache-misses",
                Event::CpuCycles => "cpu-cycles",
            }
        }
    }

    /// First 64 bytes of the kernel's perf_event_attr
    /// (PERF_ATTR_SIZE_VER0); later extensions stay zero.
    #[repr(C)]
    #[derive(Default)]
    struct PerfEventAttr {
        type_: u32,
        size: u32,
        config: u64,
        sample_period: u64,
        sample_type: u64,
        read_format: u64,
        flags: u64,
        wakeup_events: u32,
        bp_type: u32,
        config1: u64,
    }

    const PERF_TYPE_HARDWARE: u32 = 0;
    const FLAG_EXCLUDE_KERNEL: u64 = 1 << 5;
    const FLAG_EXCLUDE_HV: u64 = 1 << 6;

    pub(super) struct PerfCounter {
        fd: OwnedFd,
        event: Event,
    }

    impl PerfCounter {
        /// Counting starts immediately; readers take deltas.
        pub(super) fn open(pid: u32, event: Event) -> Result<Self> {
            let attr = PerfEventAttr {
                type_: PERF_TYPE_HARDWARE,
                size: std::mem::size_of::<PerfEventAttr>() as u32,
                config: event.config(),
                flags: FLAG_EXCLUDE_KERNEL | FLAG_EXCLUDE_HV,
                ..PerfEventAttr::default()
            };
            // perf_event_open(attr, pid, cpu=-1 (any), group_fd=-1, flags=0)
            let fd = unsafe {
                libc::syscall(
                    libc::SYS_perf_event_open,
                    &attr as *const PerfEventAttr,
                    pid as libc::pid_t,
                    -1 as libc::c_int,
                    -1 as libc::c_int,
                    0 as libc::c_ulong,
                )
            };
            if fd < 0 {
                let err = std::io::Error::last_os_error();
                return Err(match err.raw_os_error() {
                    Some(libc::ESRCH) => Error::NoSuchProcess(pid),
                    Some(libc::EACCES) | Some(libc::EPERM) => Error::CountersUnavailable {
                        reason: format!(
                            "{}: permission denied; lower /proc/sys/kernel/perf_event_paranoid \
                             or grant CAP_PERFMON",
                            event.name()
                        ),
                    },
                    Some(libc::ENOENT) | Some(libc::ENODEV) | Some(libc::EOPNOTSUPP) => {
                        Error::CountersUnavailable {
                            reason: format!(
                                "{}: event not supported on this hardware",
                                event.name()
                            ),
                        }
                    }
                    _ => Error::CountersUnavailable {
                        reason: format!("{}: perf_event_open failed: {err}", event.name()),
                    },
                });
            }
            Ok(PerfCounter {
                fd: unsafe { OwnedFd::from_raw_fd(fd as i32) },
                event,
            })
        }

        fn read_value(&self) -> Result<u64> {
            use std::os::fd::AsRawFd;
            let mut buf = [0u8; 8];
            let n = unsafe {
                libc::read(self.fd.as_raw_fd(), buf.as_mut_ptr().cast(), buf.len())
            };
            if n != 8 {
                return Err(Error::ReadFailure {
                    reason: format!(
                        "{}: {}",
                        self.event.name(),
                        std::io::Error::last_os_error()
                    ),
                });
            }
            Ok(u64::from_ne_bytes(buf))
        }
    }

    fn process_alive(pid: u32) -> bool {
        // Signal 0 probes existence; EPERM still means it exists.
        let rc = unsafe { libc::kill(pid as libc::pid_t, 0) };
        rc == 0 || std::io::Error::last_os_error().raw_os_error() == Some(libc::EPERM)
    }

    /// Paced per-process counter sampler.
    pub(super) struct LiveSource {
        pid: u32,
        period_us: u64,
        misses: PerfCounter,
        cycles: PerfCounter,
        last: (u64, u64),
        start: Instant,
        last_t_us: Option<u64>,
        pacer: Pacer,
        emitted: u64,
        alive: bool,
        last_read_us: f64,
    }

    impl LiveSource {
        pub(super) fn open(pid: u32, period_us: u64) -> Result<Self> {
            if !process_alive(pid) {
                return Err(Error::NoSuchProcess(pid));
            }
            let misses = PerfCounter::open(pid, Event::CacheMisses)?;
            let cycles = PerfCounter::open(pid, Event::CpuCycles)?;
            let last = (misses.read_value()?, cycles.read_value()?);
            Ok(LiveSource {
                pid,
                period_us,
                misses,
                cycles,
                last,
                start: Instant::now(),
                last_t_us: None,
                pacer: Pacer::new(period_us),
                emitted: 0,
                alive: true,
                last_read_us: 0.0,
            })
        }
    }

    impl SampleSource for LiveSource {
        fn next_sample(&mut self) -> Result<Option<CounterSample>> {
            if !self.alive {
                return Err(Error::TargetExited);
            }
            self.pacer.wait();
            let t0 = Instant::now();
            if !process_alive(self.pid) {
                self.alive = false;
                return Err(Error::TargetExited);
            }
            let misses_now = self.misses.read_value()?;
            let cycles_now = self.cycles.read_value()?;
            let delta_misses = misses_now.saturating_sub(self.last.0);
            let delta_cycles = cycles_now.saturating_sub(self.last.1);
            self.last = (misses_now, cycles_now);

            // True elapsed time, forced strictly monotone (consecutive
            // reads can land in the same microsecond at small periods).
            let mut t_us = self.start.elapsed().as_micros() as u64;
            if let Some(last) = self.last_t_us {
                t_us = t_us.max(last + 1);
            }
            self.last_t_us = Some(t_us);

            self.emitted += 1;
            self.last_read_us = t0.elapsed().as_secs_f64() * 1e6;
            Ok(Some(CounterSample {
                t_us,
                misses: delta_misses,
                cycles: delta_cycles,
            }))
        }

        fn status(&self) -> SourceStatus {
            SourceStatus {
                samples_emitted: self.emitted,
                deadline_misses: self.pacer.misses,
                target_alive: self.alive,
                paced: true,
                last_read_us: self.last_read_us,
                max_overshoot_us: self.pacer.max_overshoot_us,
            }
        }

        fn period_us(&self) -> u64 {
            self.period_us
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{write_trace, Trace};

    fn sample(t_us: u64, misses: u64, cycles: u64) -> CounterSample {
        CounterSample { t_us, misses, cycles }
    }

    #[test]
    fn replay_emits_the_recorded_samples_verbatim_then_ends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let samples = vec![sample(0, 7, 30_000), sample(100, 0, 29_500), sample(200, 3, 31_000)];
        write_trace(&path, &Trace::new(samples.clone()), None).unwrap();

        let mut source = open_source(&SourceDescriptor::replay(&path)).unwrap();
        let mut got = Vec::new();
        while let Some(s) = source.next_sample().unwrap() {
            got.push(s);
        }
        assert_eq!(got, samples);
        // Fused: keeps returning end-of-stream.
        assert_eq!(source.next_sample().unwrap(), None);

        let status = source.status();
        assert_eq!(status.samples_emitted, 3);
        assert_eq!(status.deadline_misses, 0);
        assert!(!status.paced);
        assert!(status.target_alive);
    }

    #[test]
    fn replay_propagates_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = SourceDescriptor::replay(dir.path().join("absent.csv"));
        assert!(matches!(open_source(&missing), Err(Error::Io(_))));

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "t_us,misses,cycles\n0,x,1\n").unwrap();
        assert!(matches!(
            open_source(&SourceDescriptor::replay(&bad)),
            Err(Error::MalformedTrace { line: 2, .. })
        ));
    }

    #[test]
    fn synthetic_source_matches_the_generator_exactly() {
        let scenario = ScenarioSpec {
            duration_samples: 120,
            warmup_samples: 20,
            seed: 33,
            ..ScenarioSpec::default()
        };
        // Large period would pace slowly; use a small one but few samples.
        let desc = SourceDescriptor::synthetic(scenario.clone()).with_period(10);
        let mut source = open_source(&desc).unwrap();
        let mut got = Vec::new();
        while let Some(s) = source.next_sample().unwrap() {
            got.push(s);
        }
        let (want, _) = generate_trace(&scenario, 10).unwrap();
        assert_eq!(got, want.samples);
        assert_eq!(source.status().samples_emitted, 120);
        assert!(source.status().paced);

        // Quiet scenario: zero misses once the warmup has decayed.
        assert!(got[20..].iter().all(|s| s.misses == 0));
    }

    #[test]
    fn pacer_holds_the_period_and_records_late_arrivals() {
        // Generous periods keep this robust on loaded machines.
        let mut pacer = Pacer::new(20_000);
        let t0 = Instant::now();
        for _ in 0..4 {
            pacer.wait();
        }
        let elapsed = t0.elapsed();
        assert!(
            elapsed >= Duration::from_millis(75),
            "4 waits at 20 ms took {elapsed:?}"
        );
        assert_eq!(pacer.misses, 0);

        // Arriving long after the boundary is a recorded miss, and the
        // schedule re-anchors instead of bursting to catch up.
        std::thread::sleep(Duration::from_millis(50));
        assert!(pacer.wait());
        assert_eq!(pacer.misses, 1);
        assert!(pacer.max_overshoot_us > 0.0);
        let t1 = Instant::now();
        assert!(!pacer.wait());
        assert!(t1.elapsed() >= Duration::from_millis(15));
    }

    #[test]
    fn descriptors_reject_sub_minimum_periods() {
        let desc = SourceDescriptor::replay("whatever.csv").with_period(5);
        assert!(matches!(open_source(&desc), Err(Error::InvalidConfig(_))));
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn live_source_on_a_dead_pid_reports_no_such_process() {
        // Far beyond pid_max on any stock kernel.
        let desc = SourceDescriptor::live(u32::MAX - 7);
        match open_source(&desc) {
            Err(Error::NoSuchProcess(_)) => {}
            // A locked-down container may refuse the probe before the
            // pid check can even run.
            Err(Error::CountersUnavailable { .. }) => {}
            Err(other) => panic!("expected no-such-process, got {other}"),
            Ok(_) => panic!("expected no-such-process, got a source"),
        }
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn live_counters_sample_this_process_when_the_platform_allows() {
        match probe_live_counters() {
            Ok(()) => {}
            Err(Error::CountersUnavailable { reason }) => {
                eprintln!("live counters unavailable here: {reason}");
                return;
            }
            Err(other) => panic!("unexpected probe failure: {other}"),
        }
        let desc = SourceDescriptor::live(std::process::id()).with_period(1_000);
        let mut source = open_source(&desc).unwrap();
        let mut last_t = None;
        for _ in 0..5 {
            // Touch some memory so the counters have something to count.
            let v: Vec<u64> = (0..4096).collect();
            std::hint::black_box(v.iter().sum::<u64>());
            let s = source.next_sample().unwrap().expect("live stream");
            if let Some(last) = last_t {
                assert!(s.t_us > last, "timestamps must strictly increase");
            }
            last_t = Some(s.t_us);
        }
        let status = source.status();
        assert_eq!(status.samples_emitted, 5);
        assert!(status.target_alive);
        assert!(status.paced);
    }
}
