//! Command-line front end: monitor a process or trace, rank counters,
//! and run the simulation-backed evaluations. Every subcommand is a thin
//! wrapper over the library; anything it can do, the library API can.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use cacheshield::detector::{Comparison, DetectorConfig};
use cacheshield::error::{Error, Result};
use cacheshield::eval::{
    evaluate_corpus, evaluate_sweep, export_report, noise_far_curve, read_corpus_file,
    read_far_grid_file, write_far_curve, write_sweep_csv, ReportFormat,
};
use cacheshield::features::{rank_attributes, read_dataset, Metric, RankParams};
use cacheshield::monitor::{
    attach_protected, drive_with_idle_resume, run_monitor, write_events, EventKind,
    MonitorConfig, MonitorEvent, Reaction,
};
use cacheshield::sim::{generate_profiling_sweep, read_scenario_file};
use cacheshield::source::SourceDescriptor;

#[derive(Parser)]
#[command(
    name = "cacheshield",
    version,
    about = "Victim-side detection of cache side-channel attacks from hardware counters"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Watch a process, command, trace file, or simulated scenario
    Monitor(MonitorArgs),
    /// Rank dataset attributes by information gain or relief
    Rank(RankArgs),
    /// Run a scenario corpus and write the detection/FAR report
    Eval(EvalArgs),
    /// Simulate an attacker profiling every cache set; write the
    /// per-set alarm bitmap
    Sweep(SweepArgs),
    /// Trace the false-alarm rate across a noise grid
    Farcurve(FarcurveArgs),
}

#[derive(Args)]
struct DetectorArgs {
    /// Averaging factor for the attack-mean estimate
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    /// Initial attack-mean estimate, misses per interval
    #[arg(long, default_value_t = 12.5)]
    mu0: f64,
    /// Threshold scale: alarm when g reaches tau * ln(mu_a + 1)
    #[arg(long, default_value_t = 10)]
    tau: u32,
    /// Alarm comparison: ge (at or above threshold) or gt
    #[arg(long, default_value = "ge")]
    compare: Comparison,
}

impl DetectorArgs {
    fn config(&self) -> DetectorConfig {
        DetectorConfig {
            beta: self.beta,
            mu_a_init: self.mu0,
            tau_e: self.tau,
            comparison: self.compare,
        }
    }
}

#[derive(Args)]
#[command(group(
    ArgGroup::new("target")
        .required(true)
        .args(["pid", "run", "replay", "scenario"])
))]
struct MonitorArgs {
    /// Attach live counters to a running process
    #[arg(long)]
    pid: Option<u32>,
    /// Spawn a command (split on whitespace) and protect it
    #[arg(long)]
    run: Option<String>,
    /// Replay a recorded trace file
    #[arg(long, value_name = "FILE")]
    replay: Option<PathBuf>,
    /// Simulate a scenario file
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Sampling period in microseconds
    #[arg(long, default_value_t = 100)]
    rate_us: u64,
    #[command(flatten)]
    detector: DetectorArgs,
    /// What to do on alarm: log, notify, stop, or hook:PATH
    #[arg(long, default_value = "log")]
    reaction: Reaction,
    /// Cycles per interval below which the target counts as idle
    #[arg(long, default_value_t = 1_000)]
    idle_cycles: u64,
    /// Consecutive idle intervals before the monitor pauses itself
    #[arg(long, default_value_t = 50)]
    idle_intervals: u32,
    /// Write the event log here as JSON lines
    /// (falls back to $CACHESHIELD_EVENTS_OUT)
    #[arg(long, value_name = "FILE")]
    events_out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Labeled dataset CSV (attribute columns plus a final `class`)
    file: PathBuf,
    /// Ranking metric
    #[arg(long, default_value = "infogain")]
    metric: Metric,
    /// Equal-frequency bins for information gain
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Relief iterations (default: every row once)
    #[arg(long)]
    iterations: Option<usize>,
    /// Seed for sampled relief iterations
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Corpus specification file
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Report destination
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Report format
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
}

#[derive(Args)]
struct SweepArgs {
    /// Number of cache sets to profile
    #[arg(long)]
    sets: u32,
    /// Victim-occupied sets as a half-open range A:B
    #[arg(long, value_name = "A:B")]
    victim_range: String,
    /// Bitmap destination (CSV)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Samples per set
    #[arg(long, default_value_t = 400)]
    samples: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampling period in microseconds
    #[arg(long, default_value_t = 100)]
    rate_us: u64,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Args)]
struct FarcurveArgs {
    /// Noise grid specification file
    #[arg(long, value_name = "FILE")]
    grid: PathBuf,
    /// Curve destination (CSV)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors; usage mistakes are.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("cacheshield: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Cmd::Monitor(args) => cmd_monitor(args),
        Cmd::Rank(args) => cmd_rank(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Farcurve(args) => cmd_farcurve(args),
    }
}

fn cmd_monitor(args: MonitorArgs) -> Result<u8> {
    let mut config = MonitorConfig::new(
        SourceDescriptor::replay("placeholder").with_period(args.rate_us),
        args.detector.config(),
    );
    config.idle_threshold_cycles = args.idle_cycles;
    config.idle_intervals_to_pause = args.idle_intervals;
    config.reaction = args.reaction.clone();

    let events = if let Some(command) = &args.run {
        let command: Vec<String> = command.split_whitespace().map(str::to_string).collect();
        let outcome = attach_protected(&command, &config)?;
        if !outcome.exit_status.success() {
            eprintln!("cacheshield: protected command exited with {}", outcome.exit_status);
        }
        outcome.events
    } else if let Some(pid) = args.pid {
        config.source = SourceDescriptor::live(pid).with_period(args.rate_us);
        drive_with_idle_resume(run_monitor(config)?, pid)
    } else {
        config.source = if let Some(path) = &args.replay {
            SourceDescriptor::replay(path).with_period(args.rate_us)
        } else {
            let scenario = read_scenario_file(args.scenario.as_ref().unwrap())?;
            SourceDescriptor::synthetic(scenario).with_period(args.rate_us)
        };
        stream_to_stdout(run_monitor(config)?)?
    };

    if args.run.is_some() || args.pid.is_some() {
        print_events(&events)?;
    }
    if let Some(path) = args
        .events_out
        .clone()
        .or_else(|| std::env::var_os("CACHESHIELD_EVENTS_OUT").map(PathBuf::from))
    {
        write_events(path, &events)?;
    }

    let alarmed = events.iter().any(|e| e.kind == EventKind::Alarm);
    let failed = events.last().is_some_and(|e| e.kind == EventKind::Error);
    Ok(if alarmed {
        2
    } else if failed {
        1
    } else {
        0
    })
}

/// Print events as they happen, resuming idle pauses (replay and
/// synthetic targets have no real CPU activity to wait for).
fn stream_to_stdout(handle: cacheshield::monitor::MonitorHandle) -> Result<Vec<MonitorEvent>> {
    let mut events = Vec::new();
    while let Some(event) = handle.next_event() {
        print_events(std::slice::from_ref(&event))?;
        if event.kind == EventKind::Paused {
            let _ = handle.resume();
        }
        events.push(event);
    }
    Ok(events)
}

fn print_events(events: &[MonitorEvent]) -> Result<()> {
    for event in events {
        let line = serde_json::to_string(event)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        println!("{line}");
    }
    Ok(())
}

fn cmd_rank(args: RankArgs) -> Result<u8> {
    let dataset = read_dataset(&args.file)?;
    let params = RankParams {
        bins: args.bins,
        iterations: args.iterations,
        seed: args.seed,
    };
    let report = rank_attributes(&dataset, args.metric, &params)?;
    println!("attribute,info_gain_bits,relief_weight");
    for name in &report.ordering {
        let row = report
            .per_attribute
            .iter()
            .find(|r| &r.attribute == name)
            .expect("ordering names come from the dataset");
        println!("{},{},{}", row.attribute, row.info_gain_bits, row.relief_weight);
    }
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<u8> {
    let spec = read_corpus_file(&args.corpus)?;
    let report = evaluate_corpus(&spec)?;
    export_report(&args.out, &report, args.format)?;
    for row in report.all_rows() {
        let rate = row
            .detection_rate
            .map_or("-".to_string(), |r| format!("{r:.3}"));
        let add = row
            .add_ms
            .map_or("-".to_string(), |a| format!("{a:.3} ms"));
        let far = row
            .far_per_sample
            .map_or("-".to_string(), |f| format!("{f:.2e}"));
        eprintln!(
            "{}: traces {} detection {} add {} far/sample {}",
            row.scenario, row.traces, rate, add, far
        );
    }
    eprintln!("report written to {}", args.out.display());
    Ok(0)
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let (lo, hi) = parse_range(&args.victim_range)?;
    if hi > args.sets {
        return Err(Error::InvalidSpec(format!(
            "victim range {lo}:{hi} exceeds {} sets",
            args.sets
        )));
    }
    let victims: Vec<u32> = (lo..hi).collect();
    let sweep = generate_profiling_sweep(args.sets, &victims, args.samples, args.seed, args.rate_us)?;
    let bitmap = evaluate_sweep(&sweep, &args.detector.config())?;
    write_sweep_csv(&args.out, &bitmap)?;
    eprintln!(
        "{} sets, {} alarmed; bitmap written to {}",
        args.sets,
        bitmap.alarmed_sets().len(),
        args.out.display()
    );
    Ok(0)
}

fn parse_range(s: &str) -> Result<(u32, u32)> {
    let err = || {
        Error::InvalidSpec(format!(
            "victim range must be A:B with A < B, got {s:?}"
        ))
    };
    let (lo, hi) = s.split_once(':').ok_or_else(err)?;
    let lo: u32 = lo.trim().parse().map_err(|_| err())?;
    let hi: u32 = hi.trim().parse().map_err(|_| err())?;
    if lo >= hi {
        return Err(err());
    }
    Ok((lo, hi))
}

fn cmd_farcurve(args: FarcurveArgs) -> Result<u8> {
    let grid = read_far_grid_file(&args.grid)?;
    let points = noise_far_curve(&grid)?;
    write_far_curve(&args.out, &points)?;
    for point in &points {
        eprintln!(
            "level {} ({}, budget {:.0}): far/sample {:.2e} far/trace {:.3}",
            point.level, point.profile, point.budget, point.far_per_sample, point.far_per_trace
        );
    }
    eprintln!("curve written to {}", args.out.display());
    Ok(0)
}
