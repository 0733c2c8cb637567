//! The detector on its own: feed a miss-count stream and watch the
//! statistic climb.
//!
//! A quiet victim produces zero misses, which the detector ignores
//! entirely. Once eviction pressure starts, every sample moves the
//! statistic toward a threshold coupled to the estimated attack
//! intensity. The alarm can fire after `tau_e` samples at the earliest;
//! pressure that sits away from the current intensity estimate counts
//! for less, so in practice the delay is a small multiple of that.
//!
//!     cargo run --release -p cacheshield --example streaming_detection

use cacheshield::detector::{min_expected_detection_time, Detector, DetectorConfig};

fn main() {
    let config = DetectorConfig::default();
    let mut detector = Detector::new(config).expect("default config is valid");

    let floor = min_expected_detection_time(detector.state().h, config.mu_a_init)
        .expect("default threshold is positive");
    println!(
        "defaults: beta {}, initial mean {}, threshold {:.3} ({} samples minimum to alarm)",
        config.beta,
        config.mu_a_init,
        detector.state().h,
        floor.ceil()
    );
    println!();

    // Sixty quiet intervals, then a flush+reload-style burst of ~18
    // misses per interval. Everything here is per sampling interval; at
    // the default 100 us period, one row is a tenth of a millisecond.
    let stream: Vec<u64> = std::iter::repeat_n(0u64, 60)
        .chain([
            14, 19, 17, 22, 18, 16, 20, 17, 19, 21, 18, 17, 20, 19, 18, 21, 17, 19, 18, 20, 19,
            18, 17, 20, 18,
        ])
        .collect();

    println!("{:>6} {:>8} {:>10} {:>10}  state", "sample", "misses", "g", "h");
    let mut alarm_at = None;
    for (i, &misses) in stream.iter().enumerate() {
        let k = i as u64 + 1;
        let decision = detector.update(&cacheshield::CounterSample {
            t_us: i as u64 * 100,
            misses,
            cycles: 30_000,
        });
        if decision.alarm && alarm_at.is_none() {
            alarm_at = Some(k);
        }
        // Print the interesting region: the quiet edge and the attack.
        if k >= 58 {
            println!(
                "{k:>6} {misses:>8} {:>10.4} {:>10.4}  {}",
                decision.g,
                decision.h,
                match (decision.alarm, alarm_at) {
                    (true, Some(at)) if at == k => "ALARM",
                    (true, _) => "still over threshold",
                    (false, Some(_)) => "latched earlier",
                    (false, None) => "",
                }
            );
        }
    }

    let alarm_at = alarm_at.expect("sustained pressure always alarms");
    println!();
    println!(
        "alarm after sample {alarm_at}, {} samples into the attack \
         ({:.1} ms at a 100 us period)",
        alarm_at - 60,
        (alarm_at - 60) as f64 * 0.1
    );
    println!(
        "final estimate of attack intensity: {:.2} misses per interval",
        detector.state().mu_a
    );
}
