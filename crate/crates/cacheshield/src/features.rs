//! Ranking hardware counters by how well they separate attack from quiet.
//!
//! Monitoring costs one counter slot per metric, so the detector watches a
//! single counter and it had better be the right one. Given a labeled
//! dataset of per-interval counter readings (class 0 = quiet, class 1 =
//! under attack), two classic filters rank the candidates:
//!
//! - information gain: `H(Class) - H(Class | Attribute)` in bits, with the
//!   attribute discretized into equal-frequency bins;
//! - relief: for sampled instances, attributes are rewarded for separating
//!   each instance from its nearest miss (other class) and penalized for
//!   differing from its nearest hit (same class), under normalized
//!   Euclidean distance. Weights land in [-1, 1].
//!
//! Both are deterministic: binning resolves ties by value (equal values
//! share a bin), relief resolves neighbor ties by lowest row index, and
//! sampling is seeded. Exhaustive iteration over every row is the default
//! for relief, which makes small-dataset rankings reproducible without any
//! seed bookkeeping.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Rows of per-interval counter readings with an attack label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub attributes: Vec<String>,
    /// `(values, label)` per row; `values` parallels `attributes`.
    pub rows: Vec<(Vec<f64>, bool)>,
}

impl LabeledDataset {
    /// Validate shape: unique attribute names, rectangular rows, finite
    /// values.
    pub fn new(attributes: Vec<String>, rows: Vec<(Vec<f64>, bool)>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::InvalidSpec("dataset needs at least one attribute".into()));
        }
        for (i, name) in attributes.iter().enumerate() {
            if name.is_empty() || name == "class" || name.contains(',') || name.contains('\n') {
                return Err(Error::InvalidSpec(format!(
                    "attribute name {name:?} is not usable as a CSV column"
                )));
            }
            if attributes[..i].contains(name) {
                return Err(Error::InvalidSpec(format!("duplicate attribute {name:?}")));
            }
        }
        for (i, (values, _)) in rows.iter().enumerate() {
            if values.len() != attributes.len() {
                return Err(Error::InvalidSpec(format!(
                    "row {i} has {} values for {} attributes",
                    values.len(),
                    attributes.len()
                )));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "row {i} contains non-finite value {v}"
                )));
            }
        }
        Ok(LabeledDataset { attributes, rows })
    }

    fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|(v, _)| v[idx]).collect()
    }

    fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|(_, l)| *l).collect()
    }
}

// ---------------------------------------------------------------------------
// Information gain
// ---------------------------------------------------------------------------

/// Assign each value to an equal-frequency bin.
///
/// Rule: stable-sort the rows by value; sorted position `p` of `n` rows
/// goes to bin `p * bins / n`; then every run of equal values is unified
/// to the bin of the run's first sorted position, so a value never
/// straddles a bin boundary.
fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let b = bins.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut assignment = vec![0usize; n];
    let mut p = 0;
    while p < n {
        let mut q = p;
        while q < n && values[order[q]] == values[order[p]] {
            q += 1;
        }
        let bin = p * b / n;
        for &row in &order[p..q] {
            assignment[row] = bin;
        }
        p = q;
    }
    assignment
}

fn entropy_bits(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.log2();
        }
    }
    h
}

/// Information gain of one attribute about the class, in bits:
/// `H(Class) - H(Class | Attribute)` after equal-frequency binning.
pub fn info_gain(dataset: &LabeledDataset, attribute: &str, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::InvalidConfig("bins must be >= 1".into()));
    }
    if dataset.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let idx = dataset.attribute_index(attribute)?;
    let values = dataset.column(idx);
    let labels = dataset.labels();
    let assignment = equal_frequency_bins(&values, bins);
    let n_bins = assignment.iter().copied().max().unwrap() + 1;

    let mut per_bin = vec![[0u64; 2]; n_bins];
    let mut class_counts = [0u64; 2];
    for (bin, label) in assignment.iter().zip(&labels) {
        per_bin[*bin][usize::from(*label)] += 1;
        class_counts[usize::from(*label)] += 1;
    }
    let n = labels.len() as f64;
    let h_class = entropy_bits(&class_counts);
    let mut h_cond = 0.0;
    for bin in &per_bin {
        let weight = (bin[0] + bin[1]) as f64 / n;
        h_cond += weight * entropy_bits(bin);
    }
    Ok(h_class - h_cond)
}

// ---------------------------------------------------------------------------
// Relief
// ---------------------------------------------------------------------------

/// Classic single-neighbor relief weights, one per attribute, in [-1, 1].
///
/// `iterations: None` evaluates every row once (the deterministic
/// default); `Some(m)` samples `m` rows with replacement using the seed.
pub fn relief(
    dataset: &LabeledDataset,
    iterations: Option<usize>,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = dataset.rows.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let labels = dataset.labels();
    if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
        return Err(Error::SingleClassDataset);
    }
    let n_attr = dataset.attributes.len();

    // Min-max normalize each attribute; constant attributes contribute no
    // distance and no weight.
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); n_attr];
    for (values, _) in &dataset.rows {
        for (r, &v) in ranges.iter_mut().zip(values) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
    let mut scaled = vec![vec![0.0f64; n_attr]; n];
    for (row, (values, _)) in scaled.iter_mut().zip(&dataset.rows) {
        for ((dst, &v), &(lo, hi)) in row.iter_mut().zip(values).zip(&ranges) {
            if hi > lo {
                *dst = (v - lo) / (hi - lo);
            }
        }
    }

    let chosen: Vec<usize> = match iterations {
        Some(m) if m < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m).map(|_| rng.random_range(0..n)).collect()
        }
        _ => (0..n).collect(),
    };
    let m = chosen.len() as f64;

    let mut weights = vec![0.0f64; n_attr];
    for &i in &chosen {
        let mut best_hit: Option<(f64, usize)> = None;
        let mut best_miss: Option<(f64, usize)> = None;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2: f64 = scaled[i]
                .iter()
                .zip(&scaled[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let slot = if labels[j] == labels[i] {
                &mut best_hit
            } else {
                &mut best_miss
            };
            // Strict less keeps the lowest index on distance ties.
            if slot.is_none_or(|(best, _)| d2 < best) {
                *slot = Some((d2, j));
            }
        }
        let miss = best_miss.expect("both classes present").1;
        for a in 0..n_attr {
            weights[a] += (scaled[i][a] - scaled[miss][a]).abs() / m;
        }
        if let Some((_, hit)) = best_hit {
            for a in 0..n_attr {
                weights[a] -= (scaled[i][a] - scaled[hit][a]).abs() / m;
            }
        }
    }
    Ok(weights)
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    InfoGain,
    Relief,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::InfoGain => "infogain",
            Metric::Relief => "relief",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "infogain" => Ok(Metric::InfoGain),
            "relief" => Ok(Metric::Relief),
            other => Err(Error::InvalidConfig(format!(
                "metric must be \"infogain\" or \"relief\", got {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankParams {
    /// Equal-frequency bins for information gain.
    pub bins: usize,
    /// Relief iterations; `None` means every row once.
    pub iterations: Option<usize>,
    /// Seed for sampled relief iterations.
    pub seed: u64,
}

impl Default for RankParams {
    fn default() -> Self {
        RankParams {
            bins: 10,
            iterations: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedAttribute {
    pub attribute: String,
    pub info_gain_bits: f64,
    pub relief_weight: f64,
}

/// Both metrics for every attribute, plus the ordering under the one that
/// was asked for.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    pub metric: Metric,
    /// In dataset column order.
    pub per_attribute: Vec<RankedAttribute>,
    /// Attribute names, best first under `metric`; ties keep column order.
    pub ordering: Vec<String>,
}

pub fn rank_attributes(
    dataset: &LabeledDataset,
    metric: Metric,
    params: &RankParams,
) -> Result<RankingReport> {
    let relief_weights = relief(dataset, params.iterations, params.seed)?;
    let mut per_attribute = Vec::with_capacity(dataset.attributes.len());
    for (i, name) in dataset.attributes.iter().enumerate() {
        per_attribute.push(RankedAttribute {
            attribute: name.clone(),
            info_gain_bits: info_gain(dataset, name, params.bins)?,
            relief_weight: relief_weights[i],
        });
    }
    let mut order: Vec<usize> = (0..per_attribute.len()).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = match metric {
            Metric::InfoGain => (
                per_attribute[a].info_gain_bits,
                per_attribute[b].info_gain_bits,
            ),
            Metric::Relief => (per_attribute[a].relief_weight, per_attribute[b].relief_weight),
        };
        vb.total_cmp(&va)
    });
    let ordering = order
        .iter()
        .map(|&i| per_attribute[i].attribute.clone())
        .collect();
    Ok(RankingReport {
        metric,
        per_attribute,
        ordering,
    })
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedDataset {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Write a dataset: header of attribute names plus a final `class`
/// column, numeric cells, label as 0/1.
pub fn write_dataset(path: impl AsRef<Path>, dataset: &LabeledDataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    writeln!(w, "{},class", dataset.attributes.join(","))?;
    for (values, label) in &dataset.rows {
        for v in values {
            write!(w, "{v},")?;
        }
        writeln!(w, "{}", u8::from(*label))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset written by [`write_dataset`] (or by hand). Missing
/// values are rejected, not imputed.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(path, 1, "empty file, expected header"))?;
    let header = header?;
    let mut columns: Vec<String> = header.trim_end().split(',').map(str::to_string).collect();
    match columns.pop() {
        Some(last) if last == "class" => {}
        _ => {
            return Err(malformed(
                path,
                1,
                "header must end with a `class` column",
            ))
        }
    }
    if columns.is_empty() {
        return Err(malformed(path, 1, "no attribute columns before `class`"));
    }

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() + 1 {
            return Err(malformed(
                path,
                lineno,
                format!("expected {} cells, got {}", columns.len() + 1, cells.len()),
            ));
        }
        let mut values = Vec::with_capacity(columns.len());
        for (cell, name) in cells[..columns.len()].iter().zip(&columns) {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(malformed(
                    path,
                    lineno,
                    format!("missing value for {name:?}"),
                ));
            }
            let v: f64 = cell.parse().map_err(|_| {
                malformed(path, lineno, format!("bad numeric value {cell:?} for {name:?}"))
            })?;
            if !v.is_finite() {
                return Err(malformed(
                    path,
                    lineno,
                    format!("non-finite value {cell:?} for {name:?}"),
                ));
            }
            values.push(v);
        }
        let label = match cells[columns.len()].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(malformed(
                    path,
                    lineno,
                    format!("class must be 0 or 1, got {other:?}"),
                ))
            }
        };
        rows.push((values, label));
    }
    LabeledDataset::new(columns, rows)
}
