//! Evaluate detection quality over a corpus of simulated scenarios.
//!
//! Each scenario is repeated with derived seeds and scored: detection
//! rate over attack traces, mean detection delay, and false-alarm rates
//! on quiet traces. The aggregated report is printed and exported as
//! CSV next to a JSON-lines twin.
//!
//!     cargo run --release -p cacheshield --example corpus_eval

use std::path::PathBuf;

use cacheshield::detector::DetectorConfig;
use cacheshield::eval::{evaluate_corpus, export_report, CorpusEntry, CorpusSpec, ReportFormat};
use cacheshield::sim::{AttackFamily, AttackSpec, ScenarioSpec};

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("cacheshield-out"));
    std::fs::create_dir_all(&out_dir).expect("create output directory");

    let attack = |name: &str, family: AttackFamily, lines: u32| CorpusEntry {
        name: name.to_string(),
        scenario: ScenarioSpec {
            warmup_samples: 0,
            attack: Some(AttackSpec::new(family, lines, 0)),
            duration_samples: 600,
            seed: 5,
            ..ScenarioSpec::default()
        },
        repetitions: 200,
    };
    let spec = CorpusSpec {
        period_us: 100,
        detector: DetectorConfig::default(),
        entries: vec![
            CorpusEntry {
                name: "quiet".into(),
                // Steady state, like the attack entries: a cache still
                // warming up can look attack-like for a moment, which is
                // a property of cold starts rather than of the detector.
                scenario: ScenarioSpec {
                    warmup_samples: 0,
                    duration_samples: 600,
                    seed: 5,
                    ..ScenarioSpec::default()
                },
                repetitions: 200,
            },
            attack("flush-reload-1", AttackFamily::FlushReload, 1),
            attack("flush-reload-4", AttackFamily::FlushReload, 4),
            attack("flush-flush", AttackFamily::FlushFlush, 1),
            attack("prime-probe", AttackFamily::PrimeProbe, 1),
        ],
    };

    let report = evaluate_corpus(&spec).expect("corpus evaluates");

    println!(
        "{:<16} {:>7} {:>10} {:>10} {:>12} {:>12}",
        "scenario", "traces", "detected", "rate", "delay (ms)", "far/trace"
    );
    for row in report.all_rows() {
        println!(
            "{:<16} {:>7} {:>10} {:>10} {:>12} {:>12}",
            row.scenario,
            row.traces,
            row.detected,
            row.detection_rate
                .map(|r| format!("{r:.3}"))
                .unwrap_or_default(),
            row.add_ms.map(|d| format!("{d:.2}")).unwrap_or_default(),
            row.far_per_trace
                .map(|f| format!("{f:.3}"))
                .unwrap_or_default(),
        );
    }

    for (name, format) in [
        ("report.csv", ReportFormat::Csv),
        ("report.jsonl", ReportFormat::Jsonl),
    ] {
        let path = out_dir.join(name);
        export_report(&path, &report, format).expect("export report");
        println!("wrote {}", path.display());
    }
}
