//! Counter traces and their on-disk CSV format.
//!
//! A trace is an ordered sequence of [`CounterSample`]s. On disk it is a
//! plain CSV file with the header `t_us,misses,cycles` and one row per
//! sampling interval; all cells are unsigned integers, so no quoting is
//! ever needed. Labeled traces carry one extra `label` column holding `0`
//! (not under attack) or `1` (under attack) per interval.
//!
//! Reading is strict: a malformed file reports the exact 1-based line
//! number and what was wrong with it. Writing then reading then writing
//! again reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::detector::CounterSample;
use crate::error::{Error, Result};
use crate::sim::ScenarioSpec;

/// Ordered counter samples from one monitoring run or simulation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub samples: Vec<CounterSample>,
}

impl Trace {
    pub fn new(samples: Vec<CounterSample>) -> Self {
        Trace { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total misses over the whole trace.
    pub fn total_misses(&self) -> u64 {
        self.samples.iter().map(|s| s.misses).sum()
    }
}

/// Ground truth attached to a generated or recorded trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLabel {
    /// Sample index (0-based) of the first interval under attack, if any.
    pub lambda: Option<u64>,
    /// Per-interval attack flag, same length as the trace.
    pub per_sample_attack: Vec<bool>,
    /// Generating scenario, when the label came from the simulator. Trace
    /// files do not carry scenario metadata, so labels read back from disk
    /// have `None` here.
    pub scenario: Option<ScenarioSpec>,
}

impl TraceLabel {
    /// Label for a trace with no attack anywhere.
    pub fn quiet(len: usize) -> Self {
        TraceLabel {
            lambda: None,
            per_sample_attack: vec![false; len],
            scenario: None,
        }
    }
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedTrace {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Write a trace, with its per-sample labels when given.
pub fn write_trace(path: impl AsRef<Path>, trace: &Trace, label: Option<&TraceLabel>) -> Result<()> {
    let path = path.as_ref();
    if let Some(label) = label {
        if label.per_sample_attack.len() != trace.samples.len() {
            return Err(Error::InvalidSpec(format!(
                "label has {} flags for {} samples",
                label.per_sample_attack.len(),
                trace.samples.len()
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    match label {
        Some(label) => {
            writeln!(w, "t_us,misses,cycles,label")?;
            for (s, attacked) in trace.samples.iter().zip(&label.per_sample_attack) {
                writeln!(
                    w,
                    "{},{},{},{}",
                    s.t_us,
                    s.misses,
                    s.cycles,
                    u8::from(*attacked)
                )?;
            }
        }
        None => {
            writeln!(w, "t_us,misses,cycles")?;
            for s in &trace.samples {
                writeln!(w, "{},{},{}", s.t_us, s.misses, s.cycles)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a trace file. The label is present exactly when the file has the
/// optional `label` column; its `lambda` is the first attacked index.
pub fn read_trace(path: impl AsRef<Path>) -> Result<(Trace, Option<TraceLabel>)> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty file, expected header"))?;
    let header = header?;
    let labeled = match header.trim_end() {
        "t_us,misses,cycles" => false,
        "t_us,misses,cycles,label" => true,
        other => {
            return Err(malformed(
                path,
                1,
                format!("unrecognized header {other:?}"),
            ))
        }
    };

    let mut samples = Vec::new();
    let mut flags = Vec::new();
    let mut prev_t: Option<u64> = None;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let mut field = |name: &str| -> Result<u64> {
            let cell = cells
                .next()
                .ok_or_else(|| malformed(path, lineno, format!("missing {name} column")))?;
            cell.trim().parse::<u64>().map_err(|_| {
                malformed(path, lineno, format!("bad {name} value {cell:?}"))
            })
        };
        let t_us = field("t_us")?;
        let misses = field("misses")?;
        let cycles = field("cycles")?;
        let flag = if labeled {
            match field("label")? {
                0 => false,
                1 => true,
                other => {
                    return Err(malformed(
                        path,
                        lineno,
                        format!("label must be 0 or 1, got {other}"),
                    ))
                }
            }
        } else {
            false
        };
        if cells.next().is_some() {
            return Err(malformed(path, lineno, "too many columns"));
        }
        if let Some(prev) = prev_t {
            if t_us <= prev {
                return Err(malformed(
                    path,
                    lineno,
                    format!("timestamps must increase, {t_us} after {prev}"),
                ));
            }
        }
        prev_t = Some(t_us);
        samples.push(CounterSample {
            t_us,
            misses,
            cycles,
        });
        if labeled {
            flags.push(flag);
        }
    }

    let trace = Trace::new(samples);
    let label = labeled.then(|| TraceLabel {
        lambda: flags.iter().position(|f| *f).map(|i| i as u64),
        per_sample_attack: flags,
        scenario: None,
    });
    Ok((trace, label))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace() -> (Trace, TraceLabel) {
        let samples = (0..6u64)
            .map(|i| CounterSample {
                t_us: i * 100,
                misses: if i >= 3 { 14 + i } else { 0 },
                cycles: 30_000,
            })
            .collect();
        let label = TraceLabel {
            lambda: Some(3),
            per_sample_attack: vec![false, false, false, true, true, true],
            scenario: None,
        };
        (Trace::new(samples), label)
    }

    #[test]
    fn labeled_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        let (trace, label) = sample_trace();
        write_trace(&p1, &trace, Some(&label)).unwrap();
        let (back, back_label) = read_trace(&p1).unwrap();
        assert_eq!(back, trace);
        let back_label = back_label.unwrap();
        assert_eq!(back_label.lambda, Some(3));
        assert_eq!(back_label.per_sample_attack, label.per_sample_attack);
        assert_eq!(back_label.scenario, None);
        write_trace(&p2, &back, Some(&back_label)).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
    }

    #[test]
    fn unlabeled_round_trip_loads_without_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let (trace, _) = sample_trace();
        write_trace(&p, &trace, None).unwrap();
        let (back, label) = read_trace(&p).unwrap();
        assert_eq!(back, trace);
        assert!(label.is_none());
    }

    #[test]
    fn all_quiet_label_has_no_lambda() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.csv");
        let (trace, _) = sample_trace();
        write_trace(&p, &trace, Some(&TraceLabel::quiet(trace.len()))).unwrap();
        let (_, label) = read_trace(&p).unwrap();
        assert_eq!(label.unwrap().lambda, None);
    }

    #[test]
    fn malformed_inputs_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let cases: &[(&str, usize, &str)] = &[
            ("", 1, "empty"),
            ("time,misses\n", 1, "header"),
            ("t_us,misses,cycles\n0,1\n", 2, "column"),
            ("t_us,misses,cycles\n0,1,2\n100,x,2\n", 3, "misses"),
            ("t_us,misses,cycles\n0,1,2,9\n", 2, "column"),
            ("t_us,misses,cycles,label\n0,1,2,7\n", 2, "label"),
            ("t_us,misses,cycles\n0,1,2\n0,1,2\n", 3, "increase"),
            ("t_us,misses,cycles\n0,1,-2\n", 2, "cycles"),
        ];
        for (content, want_line, want_word) in cases {
            let p = dir.path().join("bad.csv");
            std::fs::write(&p, content).unwrap();
            match read_trace(&p) {
                Err(Error::MalformedTrace { line, reason, .. }) => {
                    assert_eq!(line, *want_line, "content {content:?}");
                    assert!(
                        reason.contains(want_word),
                        "reason {reason:?} should mention {want_word:?}"
                    );
                }
                other => panic!("expected malformed error for {content:?}, got {other:?}"),
            }
        }
    }
}
