//! Generate labeled synthetic traces and write them as CSV files.
//!
//! Three scenarios: an undisturbed victim, a four-line flush+reload
//! attack starting mid-trace, and a duty-cycled victim being prime+probed
//! under bursty background noise. The files land in `cacheshield-out/`
//! (or the directory given as the first argument) and replay through the
//! monitor or the `cacheshield monitor --replay` command.
//!
//!     cargo run --release -p cacheshield --example simulate_traces

use std::path::PathBuf;

use cacheshield::sim::{
    generate_trace, AttackFamily, AttackSpec, NoiseProfile, NoiseSpec, ScenarioSpec, Workload,
};
use cacheshield::trace::write_trace;

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("cacheshield-out"));
    std::fs::create_dir_all(&out_dir).expect("create output directory");

    let scenarios: Vec<(&str, ScenarioSpec)> = vec![
        (
            "quiet.csv",
            ScenarioSpec {
                duration_samples: 2_000,
                seed: 1,
                ..ScenarioSpec::default()
            },
        ),
        (
            "flush-reload.csv",
            ScenarioSpec {
                attack: Some(AttackSpec::new(AttackFamily::FlushReload, 4, 800)),
                duration_samples: 2_000,
                seed: 2,
                ..ScenarioSpec::default()
            },
        ),
        (
            "prime-probe-noisy.csv",
            ScenarioSpec {
                workload: Workload::AesLike,
                duty_cycle: 0.7,
                attack: Some(AttackSpec::new(AttackFamily::PrimeProbe, 1, 1_000)),
                noise: Some(NoiseSpec::with_budget(NoiseProfile::YcsbLike, 800.0)),
                duration_samples: 2_000,
                seed: 3,
                ..ScenarioSpec::default()
            },
        ),
    ];

    for (name, scenario) in scenarios {
        let (trace, label) = generate_trace(&scenario, 100).expect("scenario is valid");
        let path = out_dir.join(name);
        write_trace(&path, &trace, Some(&label)).expect("write trace CSV");
        println!(
            "{:<40} {} samples, {} total misses, attack onset {}",
            path.display().to_string(),
            trace.len(),
            trace.total_misses(),
            label
                .lambda
                .map(|l| format!("at sample {l}"))
                .unwrap_or_else(|| "none".into()),
        );
    }

    println!();
    println!("replay one with: cacheshield monitor --replay {}/flush-reload.csv", out_dir.display());
}
