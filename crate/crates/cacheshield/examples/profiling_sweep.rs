//! Catch an attacker profiling the cache, set by set.
//!
//! Before leaking anything useful, a prime+probe attacker has to find
//! which cache sets the victim actually touches, and that survey phase
//! is loud: every probed set the victim occupies shows sustained miss
//! pressure. Running one detector per set turns the survey into a
//! bitmap of alarms that recovers the victim's set map exactly.
//!
//!     cargo run --release -p cacheshield --example profiling_sweep

use cacheshield::detector::DetectorConfig;
use cacheshield::eval::evaluate_sweep;
use cacheshield::sim::generate_profiling_sweep;

fn main() {
    let n_sets = 256u32;
    let victims: Vec<u32> = vec![3, 17, 64, 65, 66, 130, 200, 255];
    let sweep = generate_profiling_sweep(n_sets, &victims, 400, 0xF00D, 100)
        .expect("generate sweep traces");

    let bitmap = evaluate_sweep(&sweep, &DetectorConfig::default()).expect("score sweep");

    println!("probed {n_sets} sets, 400 samples each");
    println!("victim occupies: {victims:?}");
    println!();
    println!("{:>5} {:>8} {:>12}", "set", "alarmed", "alarm index");
    for set in &bitmap.sets {
        if set.alarmed {
            println!(
                "{:>5} {:>8} {:>12}",
                set.set_index,
                "yes",
                set.alarm_index.expect("alarmed sets carry an index")
            );
        }
    }
    println!("({} quiet sets not shown)", n_sets as usize - bitmap.alarmed_sets().len());
    println!();

    let recovered = bitmap.alarmed_sets();
    assert_eq!(recovered, victims, "alarm bitmap should equal the victim set map");
    println!("recovered set map matches the victim exactly: {recovered:?}");
}
