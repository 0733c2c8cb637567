//! Synthetic counter traces of victims under cache attacks.
//!
//! The generative model reproduces the qualitative shape of real
//! per-process counter recordings at a fixed sampling period:
//!
//! - a short startup transient while the working set fills the cache
//!   (elevated misses decaying geometrically to zero),
//! - essentially zero misses afterwards while the victim runs undisturbed,
//! - sustained per-interval miss draws while an eviction attack runs,
//! - bursty background misses from noisy co-resident workloads.
//!
//! Attack draws are rounded log-normal by default. Nothing downstream
//! depends on that choice; swapping in Poisson draws of equal mean is a
//! supported knob precisely so the detector's robustness to the shape can
//! be tested. Induced misses only appear in intervals where the victim is
//! active: per-process counters cannot observe evictions that an idle
//! process never trips over.
//!
//! Everything is deterministic given the spec and seed; the same inputs
//! reproduce the same trace bit for bit.

pub(crate) mod spec_file;

pub use spec_file::{read_scenario_file, write_scenario_file};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, LogNormal, Poisson};

use crate::detector::CounterSample;
use crate::error::{Error, Result};
use crate::features::LabeledDataset;
use crate::trace::{Trace, TraceLabel};

// ---------------------------------------------------------------------------
// Scenario vocabulary
// ---------------------------------------------------------------------------

/// What the simulated victim is doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Workload {
    /// Block cipher doing repeated short encryptions: table-driven memory
    /// access, active for only part of each sampling interval.
    AesLike,
    /// Modular exponentiation: long uninterrupted compute.
    #[default]
    RsaLike,
    /// Exponentiation with a larger table working set.
    ElgamalLike,
    /// Victim asleep; consumes no cycles and touches no memory.
    Idle,
}

impl Workload {
    pub fn as_str(&self) -> &'static str {
        match self {
            Workload::AesLike => "aes-like",
            Workload::RsaLike => "rsa-like",
            Workload::ElgamalLike => "elgamal-like",
            Workload::Idle => "idle",
        }
    }

    /// Nominal cycles the workload consumes in a 100 us interval when
    /// active. Scaled linearly for other periods.
    fn active_cycles_per_100us(&self) -> f64 {
        match self {
            Workload::AesLike => 7_000.0,
            Workload::RsaLike => 30_000.0,
            Workload::ElgamalLike => 28_000.0,
            Workload::Idle => 0.0,
        }
    }
}

impl std::str::FromStr for Workload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aes-like" => Ok(Workload::AesLike),
            "rsa-like" => Ok(Workload::RsaLike),
            "elgamal-like" => Ok(Workload::ElgamalLike),
            "idle" => Ok(Workload::Idle),
            other => Err(Error::InvalidSpec(format!("unknown workload {other:?}"))),
        }
    }
}

impl std::fmt::Display for Workload {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Eviction strategy of the simulated attacker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackFamily {
    /// Flush a shared line, reload it to test access. Misses scale with
    /// the number of lines probed.
    FlushReload,
    /// Flush a shared line and time the flush itself; gentler miss
    /// signature than reloading.
    FlushFlush,
    /// Fill a whole cache set and measure re-access; the victim loses the
    /// entire set every probe round.
    PrimeProbe,
}

impl AttackFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackFamily::FlushReload => "flush-reload",
            AttackFamily::FlushFlush => "flush-flush",
            AttackFamily::PrimeProbe => "prime-probe",
        }
    }

    /// Calibrated victim-side miss intensity (misses per 100 us interval)
    /// for this family probing `lines` cache lines.
    pub fn default_miss_rate(&self, lines: u32) -> f64 {
        let extra = lines.saturating_sub(1) as f64;
        match self {
            AttackFamily::FlushReload => 5.0 + extra * 10.0 / 3.0,
            AttackFamily::FlushFlush => 4.0 + extra * 8.0 / 3.0,
            AttackFamily::PrimeProbe => 20.0,
        }
    }
}

impl std::str::FromStr for AttackFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flush-reload" => Ok(AttackFamily::FlushReload),
            "flush-flush" => Ok(AttackFamily::FlushFlush),
            "prime-probe" => Ok(AttackFamily::PrimeProbe),
            other => Err(Error::InvalidSpec(format!(
                "unknown attack family {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for AttackFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Distribution of per-interval attack miss draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissDistribution {
    /// Rounded log-normal with multiplicative jitter.
    #[default]
    LogNormal,
    /// Poisson with the same mean. Kept as a swap-in to show the detector
    /// does not depend on the draw shape.
    Poisson,
}

impl MissDistribution {
    pub fn as_str(&self) -> &'static str {
        match self {
            MissDistribution::LogNormal => "log-normal",
            MissDistribution::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for MissDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-normal" => Ok(MissDistribution::LogNormal),
            "poisson" => Ok(MissDistribution::Poisson),
            other => Err(Error::InvalidSpec(format!(
                "unknown miss distribution {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for MissDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Background noise shape. All profiles are parameterized by burst rate,
/// per-interval miss mean inside a burst, and mean burst length; the
/// profile pins the shape so different workloads can be compared at a
/// matched total budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseProfile {
    /// Key-value store traffic: mid-length bursts of moderate misses.
    YcsbLike,
    /// Media streaming: short, light touches.
    StreamingLike,
    /// Random memory walker: long dense bursts that look a lot like an
    /// attack.
    RandmemLike,
}

impl NoiseProfile {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseProfile::YcsbLike => "ycsb-like",
            NoiseProfile::StreamingLike => "streaming-like",
            NoiseProfile::RandmemLike => "randmem-like",
        }
    }

    /// Shape constants: (mean misses per burst interval, mean burst length).
    fn shape(&self) -> (f64, f64) {
        match self {
            NoiseProfile::YcsbLike => (12.0, 5.0),
            NoiseProfile::StreamingLike => (6.0, 3.0),
            NoiseProfile::RandmemLike => (18.0, 50.0),
        }
    }
}

impl std::str::FromStr for NoiseProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ycsb-like" => Ok(NoiseProfile::YcsbLike),
            "streaming-like" => Ok(NoiseProfile::StreamingLike),
            "randmem-like" => Ok(NoiseProfile::RandmemLike),
            other => Err(Error::InvalidSpec(format!(
                "unknown noise profile {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for NoiseProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// An attacker running against the victim from `onset_sample` to the end
/// of the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSpec {
    pub family: AttackFamily,
    /// Cache lines probed per round (relevant to the flush families).
    pub lines: u32,
    /// First trace index (0-based) at which the attack runs.
    pub onset_sample: u32,
    /// Mean victim-side misses per interval while under attack.
    pub miss_rate_mean: f64,
    /// Multiplicative jitter of the draws (sigma of the log for the
    /// log-normal shape). Zero means every draw is the rounded mean.
    pub miss_rate_jitter: f64,
    pub distribution: MissDistribution,
}

impl AttackSpec {
    /// Attack with the calibrated miss intensity for `family` and `lines`.
    pub fn new(family: AttackFamily, lines: u32, onset_sample: u32) -> Self {
        AttackSpec {
            family,
            lines,
            onset_sample,
            miss_rate_mean: family.default_miss_rate(lines),
            miss_rate_jitter: 0.25,
            distribution: MissDistribution::LogNormal,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lines == 0 {
            return Err(Error::InvalidSpec("attack.lines must be >= 1".into()));
        }
        if !self.miss_rate_mean.is_finite() || self.miss_rate_mean <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "attack.miss_rate_mean must be > 0, got {}",
                self.miss_rate_mean
            )));
        }
        if !self.miss_rate_jitter.is_finite() || self.miss_rate_jitter < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "attack.miss_rate_jitter must be >= 0, got {}",
                self.miss_rate_jitter
            )));
        }
        Ok(())
    }
}

/// Bursty background misses from co-resident load.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub profile: NoiseProfile,
    /// Expected burst starts per 1000 intervals.
    pub burst_rate: f64,
    /// Mean misses per interval inside a burst.
    pub burst_miss_mean: f64,
    /// Mean burst length in intervals.
    pub burst_len_mean: f64,
}

impl NoiseSpec {
    /// The profile's shape at its nominal rate of one burst per 1000
    /// intervals.
    pub fn profile_defaults(profile: NoiseProfile) -> Self {
        let (miss, len) = profile.shape();
        NoiseSpec {
            profile,
            burst_rate: 1.0,
            burst_miss_mean: miss,
            burst_len_mean: len,
        }
    }

    /// The profile's shape with the rate scaled so the expected total
    /// noise misses per 1000 intervals equal `budget`. This is how
    /// different profiles are compared fairly.
    pub fn with_budget(profile: NoiseProfile, budget: f64) -> Self {
        let (miss, len) = profile.shape();
        NoiseSpec {
            profile,
            burst_rate: budget / (miss * len),
            burst_miss_mean: miss,
            burst_len_mean: len,
        }
    }

    /// Expected noise misses per 1000 intervals.
    pub fn budget(&self) -> f64 {
        self.burst_rate * self.burst_miss_mean * self.burst_len_mean
    }

    pub fn validate(&self) -> Result<()> {
        if !self.burst_rate.is_finite() || self.burst_rate < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "noise.burst_rate must be >= 0, got {}",
                self.burst_rate
            )));
        }
        if !self.burst_miss_mean.is_finite() || self.burst_miss_mean <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "noise.burst_miss_mean must be > 0, got {}",
                self.burst_miss_mean
            )));
        }
        if !self.burst_len_mean.is_finite() || self.burst_len_mean < 1.0 {
            return Err(Error::InvalidSpec(format!(
                "noise.burst_len_mean must be >= 1, got {}",
                self.burst_len_mean
            )));
        }
        Ok(())
    }
}

/// Complete description of one simulated monitoring run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub workload: Workload,
    /// Startup intervals with elevated misses while the cache warms.
    pub warmup_samples: u32,
    /// Mean misses in the first warmup interval; decays geometrically to
    /// about one half by the last.
    pub warmup_miss_mean: f64,
    /// Fraction of intervals in which the victim is actually running.
    pub duty_cycle: f64,
    pub duration_samples: u32,
    pub seed: u64,
    pub attack: Option<AttackSpec>,
    pub noise: Option<NoiseSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            workload: Workload::RsaLike,
            warmup_samples: 50,
            warmup_miss_mean: 20.0,
            duty_cycle: 1.0,
            duration_samples: 2_000,
            seed: 0,
            attack: None,
            noise: None,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.duration_samples == 0 {
            return Err(Error::InvalidSpec("duration_samples must be > 0".into()));
        }
        if self.warmup_samples >= self.duration_samples {
            return Err(Error::InvalidSpec(format!(
                "warmup_samples ({}) must be < duration_samples ({})",
                self.warmup_samples, self.duration_samples
            )));
        }
        if !self.warmup_miss_mean.is_finite() || self.warmup_miss_mean < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "warmup_miss_mean must be >= 0, got {}",
                self.warmup_miss_mean
            )));
        }
        if self.workload != Workload::Idle
            && (!self.duty_cycle.is_finite() || self.duty_cycle <= 0.0 || self.duty_cycle > 1.0)
        {
            return Err(Error::InvalidSpec(format!(
                "duty_cycle must be in (0, 1], got {}",
                self.duty_cycle
            )));
        }
        if let Some(attack) = &self.attack {
            attack.validate()?;
            if attack.onset_sample >= self.duration_samples {
                return Err(Error::InvalidSpec(format!(
                    "attack.onset_sample ({}) must be < duration_samples ({})",
                    attack.onset_sample, self.duration_samples
                )));
            }
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

pub(crate) fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn poisson_draw(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite mean");
    p.sample(rng) as u64
}

/// Per-interval miss draws with a fixed mean, shaped per the spec.
struct MissDraw {
    distribution: MissDistribution,
    mean: f64,
    log_normal: Option<LogNormal<f64>>,
}

impl MissDraw {
    fn new(mean: f64, jitter: f64, distribution: MissDistribution) -> Self {
        let log_normal = match distribution {
            MissDistribution::LogNormal if jitter > 0.0 => Some(
                LogNormal::new(mean.ln() - jitter * jitter / 2.0, jitter)
                    .expect("finite log-normal parameters"),
            ),
            _ => None,
        };
        MissDraw {
            distribution,
            mean,
            log_normal,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match (self.distribution, &self.log_normal) {
            (MissDistribution::LogNormal, Some(d)) => d.sample(rng).round() as u64,
            (MissDistribution::LogNormal, None) => self.mean.round() as u64,
            (MissDistribution::Poisson, _) => poisson_draw(rng, self.mean),
        }
    }
}

/// Generate one labeled trace. Timestamps advance by `period_us` from
/// zero; active-interval cycle counts scale with the period.
pub fn generate_trace(spec: &ScenarioSpec, period_us: u64) -> Result<(Trace, TraceLabel)> {
    spec.validate()?;
    if period_us == 0 {
        return Err(Error::InvalidSpec("period_us must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.duration_samples as usize;

    let warmup = if spec.workload == Workload::Idle {
        0
    } else {
        spec.warmup_samples as usize
    };
    // Geometric decay reaching about 0.5 misses by the last warmup
    // interval, so post-warmup quiet is an honest zero.
    let decay = if warmup > 1 && spec.warmup_miss_mean > 0.5 {
        (0.5 / spec.warmup_miss_mean).powf(1.0 / (warmup as f64 - 1.0))
    } else {
        1.0
    };

    let cycles_base = spec.workload.active_cycles_per_100us() * period_us as f64 / 100.0;
    let cycle_jitter = LogNormal::new(-0.05f64 * 0.05 / 2.0, 0.05).expect("fixed parameters");

    let attack_draw = spec
        .attack
        .as_ref()
        .map(|a| MissDraw::new(a.miss_rate_mean, a.miss_rate_jitter, a.distribution));
    let burst_len = spec
        .noise
        .as_ref()
        .map(|z| Geometric::new(1.0 / z.burst_len_mean).expect("mean >= 1"));

    let mut samples = Vec::with_capacity(n);
    let mut flags = vec![false; n];
    let mut burst_left: u64 = 0;

    for (i, flag) in flags.iter_mut().enumerate() {
        let starting_up = i < warmup;
        let active = match spec.workload {
            Workload::Idle => false,
            _ => starting_up || spec.duty_cycle >= 1.0 || rng.random::<f64>() < spec.duty_cycle,
        };
        let cycles = if active {
            (cycles_base * cycle_jitter.sample(&mut rng)).round() as u64
        } else {
            0
        };

        let mut misses = 0u64;
        if starting_up {
            misses += poisson_draw(&mut rng, spec.warmup_miss_mean * decay.powi(i as i32));
        }
        if let (Some(attack), Some(draw)) = (&spec.attack, &attack_draw) {
            if i >= attack.onset_sample as usize {
                *flag = true;
                if active {
                    misses += draw.sample(&mut rng);
                }
            }
        }
        if let (Some(noise), Some(len_dist)) = (&spec.noise, &burst_len) {
            if burst_left == 0 && rng.random::<f64>() < noise.burst_rate / 1000.0 {
                burst_left = 1 + len_dist.sample(&mut rng);
            }
            if burst_left > 0 {
                burst_left -= 1;
                if active {
                    misses += poisson_draw(&mut rng, noise.burst_miss_mean);
                }
            }
        }

        samples.push(CounterSample {
            t_us: i as u64 * period_us,
            misses,
            cycles,
        });
    }

    let lambda = spec.attack.as_ref().map(|a| a.onset_sample as u64);
    Ok((
        Trace::new(samples),
        TraceLabel {
            lambda,
            per_sample_attack: flags,
            scenario: Some(spec.clone()),
        },
    ))
}

// ---------------------------------------------------------------------------
// Profiling sweep
// ---------------------------------------------------------------------------

/// One cache set's short probe trace in a profiling sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub set_index: u32,
    pub trace: Trace,
    pub label: TraceLabel,
}

/// Model an attacker profiling every cache set in turn: each set gets a
/// short trace, and only sets the victim actually occupies show
/// prime+probe pressure. Detecting per-set alarms recovers the victim's
/// set map exactly.
pub fn generate_profiling_sweep(
    n_sets: u32,
    victim_sets: &[u32],
    samples_per_set: u32,
    seed: u64,
    period_us: u64,
) -> Result<Vec<SweepEntry>> {
    if n_sets == 0 {
        return Err(Error::InvalidSpec("n_sets must be > 0".into()));
    }
    if samples_per_set == 0 {
        return Err(Error::InvalidSpec("samples_per_set must be > 0".into()));
    }
    if let Some(bad) = victim_sets.iter().find(|s| **s >= n_sets) {
        return Err(Error::InvalidSpec(format!(
            "victim set {bad} out of range for {n_sets} sets"
        )));
    }
    let mut entries = Vec::with_capacity(n_sets as usize);
    for set in 0..n_sets {
        let victim = victim_sets.contains(&set);
        let spec = ScenarioSpec {
            workload: Workload::AesLike,
            warmup_samples: 0,
            warmup_miss_mean: 0.0,
            duty_cycle: 1.0,
            duration_samples: samples_per_set,
            seed: mix_seed(seed, set as u64),
            attack: victim.then(|| AttackSpec::new(AttackFamily::PrimeProbe, 1, 0)),
            noise: None,
        };
        let (trace, label) = generate_trace(&spec, period_us)?;
        entries.push(SweepEntry {
            set_index: set,
            trace,
            label,
        });
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// Multi-counter dataset export
// ---------------------------------------------------------------------------

/// Simulate per-interval readings of several hardware counters for quiet
/// and under-attack intervals, as a labeled dataset for counter selection.
///
/// Last-level misses separate the classes almost perfectly; second-level
/// misses and interventions inherit part of the signal with more overlap;
/// TLB misses and raw cycle counts carry almost nothing. That mirrors how
/// the counters behave on hardware and gives ranking code a known right
/// answer: `llc_misses` first.
pub fn counter_dataset(rows_per_class: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attack_draw = MissDraw::new(15.0, 0.25, MissDistribution::LogNormal);
    let mut rows = Vec::with_capacity(rows_per_class * 2);
    for class in [false, true] {
        for _ in 0..rows_per_class {
            let llc = if class {
                attack_draw.sample(&mut rng) as f64
            } else {
                poisson_draw(&mut rng, 0.3) as f64
            };
            // Upstream level sees a share of the same traffic buried in
            // its own much larger churn.
            let l2 = llc * 0.4 + poisson_draw(&mut rng, 30.0) as f64;
            // Coherence interventions rise weakly under attack.
            let interventions =
                poisson_draw(&mut rng, if class { 4.5 } else { 3.0 }) as f64;
            // Mostly class-independent.
            let tlb = poisson_draw(&mut rng, if class { 2.4 } else { 2.0 }) as f64;
            let cycles = 30_000.0 + poisson_draw(&mut rng, 400.0) as f64
                - poisson_draw(&mut rng, 400.0) as f64;
            rows.push((vec![llc, l2, interventions, tlb, cycles], class));
        }
    }
    LabeledDataset::new(
        vec![
            "llc_misses".into(),
            "l2_misses".into(),
            "cache_interventions".into(),
            "tlb_misses".into(),
            "cycles".into(),
        ],
        rows,
    )
    .expect("constructed rows are rectangular and finite")
}
