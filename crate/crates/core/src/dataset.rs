//! CSV ingestion, feature standardization and deterministic train/val/test
//! splitting.
//!
//! Features are stored row-major in a flat buffer. Regression targets are a
//! single real column; classification targets are non-negative integer labels
//! and are one-hot encoded only when a loss needs them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reg" | "regression" => Ok(Task::Regression),
            "cls" | "classification" => Ok(Task::Classification),
            other => Err(Error::invalid(format!("unknown task `{other}` (expected reg|cls)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Regression => f.write_str("regression"),
            Task::Classification => f.write_str("classification"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Vec<f64>),
    Classification { labels: Vec<usize>, n_classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.len(),
            Targets::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Real targets, or `None` for class labels.
    pub fn regression(&self) -> Option<&[f64]> {
        match self {
            Targets::Regression(y) => Some(y),
            Targets::Classification { .. } => None,
        }
    }

    fn subset(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Regression(y) => Targets::Regression(idx.iter().map(|&i| y[i]).collect()),
            Targets::Classification { labels, n_classes } => Targets::Classification {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
        }
    }
}

/// Which column of a CSV file holds the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for TargetColumn {
    /// A bare integer is an index only if no header carries that name; the
    /// resolution happens in [`load_csv`].
    fn from(s: &str) -> Self {
        TargetColumn::Name(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    targets: Targets,
    feature_names: Vec<String>,
    target_name: String,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        targets: Targets,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        Error::check_dim(n_features, feature_names.len())?;
        if n_features == 0 {
            if !features.is_empty() {
                return Err(Error::invalid("features given for a zero-width dataset"));
            }
        } else if !features.len().is_multiple_of(n_features) {
            return Err(Error::invalid("feature buffer is not a whole number of rows"));
        }
        let n = features.len().checked_div(n_features).unwrap_or(0);
        Error::check_dim(n, targets.len())?;
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite feature value at flat index {bad}")));
        }
        if let Targets::Classification { labels, n_classes } = &targets {
            if let Some(&l) = labels.iter().find(|&&l| l >= *n_classes) {
                return Err(Error::InvalidTarget(format!("label {l} >= n_classes {n_classes}")));
            }
        }
        Ok(Dataset {
            features,
            n_features,
            targets,
            feature_names,
            target_name: target_name.into(),
        })
    }

    /// Regression dataset from rows, with generated column names `x1..xd` and `y`.
    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * d);
        for r in rows {
            Error::check_dim(d, r.len())?;
            flat.extend_from_slice(r);
        }
        let names = (1..=d).map(|j| format!("x{j}")).collect();
        Dataset::new(flat, d, Targets::Regression(targets), names, "y")
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_samples()).map(move |i| self.row(i))
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn task(&self) -> Task {
        match self.targets {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification { .. } => Task::Classification,
        }
    }

    /// Rows picked by index, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            targets: self.targets.subset(idx),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }
}

fn parse_cell(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a headed, comma-separated file. All non-target columns become
/// features.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, target, task)
}

pub fn read_csv(reader: impl std::io::Read, target: &TargetColumn, task: Task) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let target_idx = match target {
        TargetColumn::Name(name) => match headers.iter().position(|h| h == name) {
            Some(i) => i,
            None => match name.parse::<usize>() {
                Ok(i) if i < headers.len() => i,
                _ => return Err(Error::UnknownTargetColumn(name.clone())),
            },
        },
        TargetColumn::Index(i) if *i < headers.len() => *i,
        TargetColumn::Index(i) => return Err(Error::UnknownTargetColumn(i.to_string())),
    };

    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let d = feature_names.len();

    let mut features = Vec::new();
    let mut y_real = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        Error::check_dim(headers.len(), record.len())?;
        for (j, cell) in record.iter().enumerate() {
            if j == target_idx {
                continue;
            }
            let v = parse_cell(cell).ok_or_else(|| Error::NonNumericCell {
                row,
                column: headers[j].clone(),
                value: cell.to_string(),
            })?;
            features.push(v);
        }
        let cell = &record[target_idx];
        match task {
            Task::Regression => {
                let v = parse_cell(cell).ok_or_else(|| Error::NonNumericCell {
                    row,
                    column: headers[target_idx].clone(),
                    value: cell.to_string(),
                })?;
                y_real.push(v);
            }
            Task::Classification => {
                let label = parse_cell(cell)
                    .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v < u32::MAX as f64)
                    .ok_or_else(|| Error::NonIntegerLabel {
                        row,
                        value: cell.to_string(),
                    })?;
                labels.push(label as usize);
            }
        }
    }

    let targets = match task {
        Task::Regression => Targets::Regression(y_real),
        Task::Classification => {
            let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
            Targets::Classification { labels, n_classes }
        }
    };
    Dataset::new(features, d, targets, feature_names, headers[target_idx].clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

impl ColumnStats {
    /// Population mean and standard deviation. A constant column gets its
    /// value as mean and std 1, so it maps to exact zeros.
    pub fn fit(values: impl Iterator<Item = f64> + Clone) -> ColumnStats {
        let (mut n, mut sum) = (0usize, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.clone() {
            n += 1;
            sum += v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if n == 0 || lo == hi {
            return ColumnStats {
                mean: if n == 0 { 0.0 } else { lo },
                std: 1.0,
            };
        }
        let mean = sum / n as f64;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        ColumnStats {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// Per-column standardization statistics, keyed by column name in file order.
/// For regression the target column is included as the last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormStats {
    pub columns: IndexMap<String, ColumnStats>,
}

impl NormStats {
    pub fn fit(d: &Dataset) -> NormStats {
        let mut columns = IndexMap::new();
        let n = d.n_samples();
        for (j, name) in d.feature_names.iter().enumerate() {
            let col = (0..n).map(move |i| d.features[i * d.n_features + j]);
            columns.insert(name.clone(), ColumnStats::fit(col));
        }
        if let Targets::Regression(y) = &d.targets {
            columns.insert(d.target_name.clone(), ColumnStats::fit(y.iter().copied()));
        }
        NormStats { columns }
    }

    pub fn get(&self, column: &str) -> Option<&ColumnStats> {
        self.columns.get(column)
    }

    /// Replays the statistics on another dataset with the same columns.
    pub fn apply(&self, d: &Dataset) -> Result<Dataset> {
        let expected = self.columns.len() - usize::from(self.columns.contains_key(&d.target_name));
        Error::check_dim(expected, d.n_features)?;
        let stats: Vec<ColumnStats> = d
            .feature_names
            .iter()
            .map(|name| {
                self.columns
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("no normalization stats for column `{name}`")))
            })
            .collect::<Result<_>>()?;
        let mut features = d.features.clone();
        if d.n_features > 0 {
            for row in features.chunks_mut(d.n_features) {
                for (v, s) in row.iter_mut().zip(&stats) {
                    *v = s.apply(*v);
                }
            }
        }
        let targets = match &d.targets {
            Targets::Regression(y) => match self.columns.get(&d.target_name) {
                Some(s) => Targets::Regression(y.iter().map(|&v| s.apply(v)).collect()),
                None => Targets::Regression(y.clone()),
            },
            t => t.clone(),
        };
        Ok(Dataset {
            features,
            targets,
            ..d.clone()
        })
    }

    pub fn target_stats(&self, target_name: &str) -> Option<ColumnStats> {
        self.columns.get(target_name).copied()
    }
}

/// Standardizes every feature column (and a regression target) to zero mean
/// and unit population variance.
pub fn normalize(d: &Dataset) -> (Dataset, NormStats) {
    let stats = NormStats::fit(d);
    let out = stats.apply(d).expect("stats fitted on the same dataset");
    (out, stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub test_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            test_fraction: 0.2,
            val_fraction: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("test_fraction", self.test_fraction),
            ("val_fraction", self.val_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0,1), got {f}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Test rows are carved first, then validation rows from the remainder. Each
/// held-out part gets `floor(size * fraction)` rows but never fewer than one.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    if n < 5 {
        return Err(Error::invalid(format!("need at least 5 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng_from(spec.seed, "split", 0));
    let n_test = ((n as f64 * spec.test_fraction).floor() as usize).max(1);
    let rest = n - n_test;
    let n_val = ((rest as f64 * spec.val_fraction).floor() as usize).max(1);
    let test = idx[..n_test].to_vec();
    let val = idx[n_test..n_test + n_val].to_vec();
    let train = idx[n_test + n_val..].to_vec();
    Ok(SplitIndices { train, val, test })
}

pub fn split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let s = split_indices(d.n_samples(), spec)?;
    Ok((d.subset(&s.train), d.subset(&s.val), d.subset(&s.test)))
}

/// Normalized splits plus the training-split statistics used to produce them.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub stats: NormStats,
}

/// Split, fit normalization on the training part only, replay on val/test.
pub fn prepare(d: &Dataset, spec: &SplitSpec) -> Result<PreparedData> {
    let (train, val, test) = split(d, spec)?;
    let (train, stats) = normalize(&train);
    let val = stats.apply(&val)?;
    let test = stats.apply(&test)?;
    Ok(PreparedData {
        train,
        val,
        test,
        stats,
    })
}
