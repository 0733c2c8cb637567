//! Run the full monitoring service over a recorded trace.
//!
//! The monitor wraps a sample source and the detector on a dedicated
//! thread and reports its life as a stream of events: start, idle
//! pauses and resumes, the alarm, overhead accounting, and target exit.
//! On a replayed trace the alarm lands at exactly the same sample index
//! a bare detector run would produce — pausing changes when samples are
//! read, never what the detector sees.
//!
//!     cargo run --release -p cacheshield --example replay_monitor

use cacheshield::detector::DetectorConfig;
use cacheshield::eval::detection_index;
use cacheshield::monitor::{run_monitor, EventKind, MonitorConfig};
use cacheshield::sim::{generate_trace, AttackFamily, AttackSpec, ScenarioSpec};
use cacheshield::source::SourceDescriptor;
use cacheshield::trace::write_trace;

fn main() {
    // A duty-cycled victim: the idle gaps are what make the monitor
    // pause itself, and the attack starts four hundred samples in. The
    // duty cycle stays well above one half — every idle interval costs
    // the statistic about as much as an attacked interval earns it, so
    // a victim that mostly sleeps hides the attack along with itself.
    let scenario = ScenarioSpec {
        duty_cycle: 0.8,
        attack: Some(AttackSpec::new(AttackFamily::FlushReload, 4, 400)),
        duration_samples: 1_500,
        seed: 11,
        ..ScenarioSpec::default()
    };
    let (trace, _) = generate_trace(&scenario, 100).expect("valid scenario");

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("victim.csv");
    write_trace(&path, &trace, None).expect("write trace");

    let mut config = MonitorConfig::new(
        SourceDescriptor::replay(&path),
        DetectorConfig::default(),
    );
    config.idle_intervals_to_pause = 3; // pause quickly on idle stretches

    let handle = run_monitor(config).expect("monitor starts");
    let events = handle.collect();

    let mut pauses = 0u32;
    for event in &events {
        match event.kind {
            EventKind::Paused => pauses += 1,
            EventKind::Resumed => {}
            _ => {
                let detail = if let Some(alarm) = event.alarm_info() {
                    format!(
                        "sample {} ({} misses, g {:.2} over h {:.2})",
                        alarm.sample_index, alarm.misses, alarm.g, alarm.h
                    )
                } else if let Some(stats) = event.overhead() {
                    format!(
                        "{} samples, mean loop {:.3} us, utilization {:.5}",
                        stats.samples, stats.mean_loop_us, stats.utilization
                    )
                } else {
                    String::new()
                };
                println!("{:>9} us  {:?} {detail}", event.t_us, event.kind);
            }
        }
    }
    println!("({pauses} idle pauses, each resumed)");

    // The monitor agrees with a bare detector pass over the same file.
    let oracle = detection_index(&DetectorConfig::default(), &trace)
        .expect("valid config")
        .expect("this scenario alarms");
    let monitored = events
        .iter()
        .find_map(|e| e.alarm_info())
        .expect("monitor alarmed")
        .sample_index;
    println!();
    println!("alarm index {monitored}, standalone detector {oracle}: equal");
    assert_eq!(monitored, oracle);
}
