//! Attach to a real process via hardware counters.
//!
//! Spawns a short shell busy-loop, reads its cache misses and cycles
//! through perf events, and feeds them to the detector — the same
//! plumbing `cacheshield monitor --pid` uses. Live counters need Linux
//! with perf_event access; anywhere else this prints why and exits
//! cleanly. An ordinary shell loop may or may not trip a detector tuned
//! for cache attacks, so no alarm here is the expected outcome.
//!
//!     cargo run --release -p cacheshield --example attach_live

use cacheshield::detector::DetectorConfig;
use cacheshield::monitor::{attach_protected, EventKind, MonitorConfig};
use cacheshield::source::{probe_live_counters, SourceDescriptor};

fn main() {
    if let Err(e) = probe_live_counters() {
        println!("live counters are not usable here: {e}");
        println!("(needs Linux perf_event and a permissive perf_event_paranoid;");
        println!(" the replay_monitor example shows the same loop on recorded traces)");
        return;
    }

    let command: Vec<String> = ["sh", "-c", "i=0; while [ $i -lt 400000 ]; do i=$((i+1)); done"]
        .iter()
        .map(|s| s.to_string())
        .collect();

    // A busy shell loop misses a lot while its working set settles, so
    // start the attack-mean estimate well above attack scale: this is a
    // plumbing demo, not a tuned deployment.
    let detector = DetectorConfig {
        mu_a_init: 500.0,
        ..DetectorConfig::default()
    };
    // The pid here is a placeholder: attach_protected swaps in a live
    // source for the child it spawns, keeping only the period.
    let config = MonitorConfig::new(
        SourceDescriptor::live(std::process::id()).with_period(1_000),
        detector,
    );

    println!("spawning: {}", command.join(" "));
    let outcome = attach_protected(&command, &config).expect("attach to child");

    println!("child exited with {}", outcome.exit_status);
    println!("{} events:", outcome.events.len());
    for event in &outcome.events {
        match event.kind {
            EventKind::Alarm => {
                let info = event.alarm_info().expect("alarm payload");
                println!(
                    "  t={:>9} us  alarm: sample {} saw {} misses (g={:.2}, h={:.2})",
                    event.t_us, info.sample_index, info.misses, info.g, info.h
                );
            }
            EventKind::OverheadReport => {
                let stats = event.overhead().expect("overhead payload");
                println!(
                    "  t={:>9} us  overhead: {} samples, {:.2} us/loop ({:.4}% of each period)",
                    event.t_us,
                    stats.samples,
                    stats.mean_loop_us,
                    stats.utilization * 100.0
                );
            }
            kind => println!("  t={:>9} us  {kind:?}", event.t_us),
        }
    }
}
