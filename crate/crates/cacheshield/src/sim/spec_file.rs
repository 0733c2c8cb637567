//! Flat key-value files describing scenarios.
//!
//! Scenario files are plain text: one `key = value` pair per line, `#`
//! lines are comments, blank lines are ignored. Values are decimal
//! numbers or the documented name tokens. Nested specs use dotted keys.
//!
//! ```text
//! # victim under a one-line flush+reload attack
//! workload = rsa-like
//! duration_samples = 2000
//! seed = 7
//! attack.family = flush-reload
//! attack.lines = 1
//! attack.onset_sample = 500
//! ```
//!
//! Keys for the scenario itself: `workload`, `warmup_samples`,
//! `warmup_miss_mean`, `duty_cycle`, `duration_samples`, `seed`. Attack
//! keys: `attack.family` (required for an attack), `attack.lines`,
//! `attack.onset_sample`, `attack.miss_rate_mean`, `attack.miss_rate_jitter`,
//! `attack.distribution`. Noise keys: `noise.profile` (required for
//! noise), `noise.burst_rate`, `noise.burst_miss_mean`,
//! `noise.burst_len_mean`. Omitted keys take their documented defaults;
//! omitted attack intensity comes from the family and line count.
//!
//! Corpus and noise-grid files reuse the same syntax with prefixed keys;
//! see the evaluation module.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{AttackSpec, NoiseSpec, ScenarioSpec};
use crate::error::{Error, Result};

/// One `key = value` line of a spec file, with its 1-based line number.
#[derive(Debug, Clone)]
pub(crate) struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub(crate) fn spec_file_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedSpecFile {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Parse a flat key-value file into ordered entries. Duplicate keys are
/// rejected; structure on top of the pairs is the caller's business.
pub(crate) fn parse_kv_file(path: &Path) -> Result<Vec<KvEntry>> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries: Vec<KvEntry> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(spec_file_error(
                path,
                lineno,
                format!("expected `key = value`, got {trimmed:?}"),
            ));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(spec_file_error(path, lineno, "empty key"));
        }
        if value.is_empty() {
            return Err(spec_file_error(path, lineno, format!("empty value for {key:?}")));
        }
        if let Some(dup) = entries.iter().find(|e| e.key == key) {
            return Err(spec_file_error(
                path,
                lineno,
                format!("duplicate key {key:?} (first on line {})", dup.line),
            ));
        }
        entries.push(KvEntry {
            line: lineno,
            key,
            value,
        });
    }
    Ok(entries)
}

fn parse_value<T: std::str::FromStr>(path: &Path, e: &KvEntry, what: &str) -> Result<T> {
    e.value.parse::<T>().map_err(|_| {
        spec_file_error(
            path,
            e.line,
            format!("bad {what} value {:?} for key {:?}", e.value, e.key),
        )
    })
}

fn parse_name<T>(path: &Path, e: &KvEntry) -> Result<T>
where
    T: std::str::FromStr<Err = Error>,
{
    e.value
        .parse::<T>()
        .map_err(|err| spec_file_error(path, e.line, err.to_string()))
}

/// Build a scenario from the entries whose keys start with `prefix`
/// (empty prefix for a standalone scenario file). Unknown keys under the
/// prefix are rejected with their line number.
pub(crate) fn scenario_from_entries(
    path: &Path,
    entries: &[KvEntry],
    prefix: &str,
) -> Result<ScenarioSpec> {
    let mut spec = ScenarioSpec::default();

    struct Pending<'a> {
        family: Option<&'a KvEntry>,
        lines: Option<&'a KvEntry>,
        onset: Option<&'a KvEntry>,
        mean: Option<&'a KvEntry>,
        jitter: Option<&'a KvEntry>,
        distribution: Option<&'a KvEntry>,
    }
    let mut attack = Pending {
        family: None,
        lines: None,
        onset: None,
        mean: None,
        jitter: None,
        distribution: None,
    };
    struct PendingNoise<'a> {
        profile: Option<&'a KvEntry>,
        rate: Option<&'a KvEntry>,
        miss: Option<&'a KvEntry>,
        len: Option<&'a KvEntry>,
    }
    let mut noise = PendingNoise {
        profile: None,
        rate: None,
        miss: None,
        len: None,
    };
    let mut any_attack_key: Option<&KvEntry> = None;
    let mut any_noise_key: Option<&KvEntry> = None;

    for e in entries {
        let Some(key) = e.key.strip_prefix(prefix) else {
            continue;
        };
        match key {
            "workload" => spec.workload = parse_name(path, e)?,
            "warmup_samples" => spec.warmup_samples = parse_value(path, e, "integer")?,
            "warmup_miss_mean" => spec.warmup_miss_mean = parse_value(path, e, "number")?,
            "duty_cycle" => spec.duty_cycle = parse_value(path, e, "number")?,
            "duration_samples" => spec.duration_samples = parse_value(path, e, "integer")?,
            "seed" => spec.seed = parse_value(path, e, "integer")?,
            "attack.family" => {
                attack.family = Some(e);
                any_attack_key = any_attack_key.or(Some(e));
            }
            "attack.lines" => {
                attack.lines = Some(e);
                any_attack_key = any_attack_key.or(Some(e));
            }
            "attack.onset_sample" => {
                attack.onset = Some(e);
                any_attack_key = any_attack_key.or(Some(e));
            }
            "attack.miss_rate_mean" => {
                attack.mean = Some(e);
                any_attack_key = any_attack_key.or(Some(e));
            }
            "attack.miss_rate_jitter" => {
                attack.jitter = Some(e);
                any_attack_key = any_attack_key.or(Some(e));
            }
            "attack.distribution" => {
                attack.distribution = Some(e);
                any_attack_key = any_attack_key.or(Some(e));
            }
            "noise.profile" => {
                noise.profile = Some(e);
                any_noise_key = any_noise_key.or(Some(e));
            }
            "noise.burst_rate" => {
                noise.rate = Some(e);
                any_noise_key = any_noise_key.or(Some(e));
            }
            "noise.burst_miss_mean" => {
                noise.miss = Some(e);
                any_noise_key = any_noise_key.or(Some(e));
            }
            "noise.burst_len_mean" => {
                noise.len = Some(e);
                any_noise_key = any_noise_key.or(Some(e));
            }
            other => {
                return Err(spec_file_error(
                    path,
                    e.line,
                    format!("unknown scenario key {other:?}"),
                ))
            }
        }
    }

    if let Some(first) = any_attack_key {
        let Some(family_entry) = attack.family else {
            return Err(spec_file_error(
                path,
                first.line,
                "attack keys present but attack.family is missing",
            ));
        };
        let family = parse_name(path, family_entry)?;
        let lines = match attack.lines {
            Some(e) => parse_value(path, e, "integer")?,
            None => 1,
        };
        let mut a = AttackSpec::new(family, lines, 0);
        if let Some(e) = attack.onset {
            a.onset_sample = parse_value(path, e, "integer")?;
        }
        if let Some(e) = attack.mean {
            a.miss_rate_mean = parse_value(path, e, "number")?;
        }
        if let Some(e) = attack.jitter {
            a.miss_rate_jitter = parse_value(path, e, "number")?;
        }
        if let Some(e) = attack.distribution {
            a.distribution = parse_name(path, e)?;
        }
        spec.attack = Some(a);
    }

    if let Some(first) = any_noise_key {
        let Some(profile_entry) = noise.profile else {
            return Err(spec_file_error(
                path,
                first.line,
                "noise keys present but noise.profile is missing",
            ));
        };
        let profile = parse_name(path, profile_entry)?;
        let mut z = NoiseSpec::profile_defaults(profile);
        if let Some(e) = noise.rate {
            z.burst_rate = parse_value(path, e, "number")?;
        }
        if let Some(e) = noise.miss {
            z.burst_miss_mean = parse_value(path, e, "number")?;
        }
        if let Some(e) = noise.len {
            z.burst_len_mean = parse_value(path, e, "number")?;
        }
        spec.noise = Some(z);
    }

    Ok(spec)
}

/// Canonical key-value pairs for a scenario, in file order.
pub(crate) fn scenario_to_kv(spec: &ScenarioSpec) -> Vec<(String, String)> {
    let mut kv = vec![
        ("workload".into(), spec.workload.to_string()),
        ("warmup_samples".into(), spec.warmup_samples.to_string()),
        ("warmup_miss_mean".into(), spec.warmup_miss_mean.to_string()),
        ("duty_cycle".into(), spec.duty_cycle.to_string()),
        (
            "duration_samples".into(),
            spec.duration_samples.to_string(),
        ),
        ("seed".into(), spec.seed.to_string()),
    ];
    if let Some(a) = &spec.attack {
        kv.push(("attack.family".into(), a.family.to_string()));
        kv.push(("attack.lines".into(), a.lines.to_string()));
        kv.push(("attack.onset_sample".into(), a.onset_sample.to_string()));
        kv.push(("attack.miss_rate_mean".into(), a.miss_rate_mean.to_string()));
        kv.push((
            "attack.miss_rate_jitter".into(),
            a.miss_rate_jitter.to_string(),
        ));
        kv.push(("attack.distribution".into(), a.distribution.to_string()));
    }
    if let Some(z) = &spec.noise {
        kv.push(("noise.profile".into(), z.profile.to_string()));
        kv.push(("noise.burst_rate".into(), z.burst_rate.to_string()));
        kv.push((
            "noise.burst_miss_mean".into(),
            z.burst_miss_mean.to_string(),
        ));
        kv.push(("noise.burst_len_mean".into(), z.burst_len_mean.to_string()));
    }
    kv
}

/// Read and validate a standalone scenario file.
pub fn read_scenario_file(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let entries = parse_kv_file(path)?;
    let spec = scenario_from_entries(path, &entries, "")?;
    spec.validate()?;
    Ok(spec)
}

/// Write a scenario as a flat key-value file that reads back equal.
pub fn write_scenario_file(path: impl AsRef<Path>, spec: &ScenarioSpec) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for (k, v) in scenario_to_kv(spec) {
        writeln!(w, "{k} = {v}")?;
    }
    w.flush()?;
    Ok(())
}
