//! Tabular ingestion, random partitions and SMOTE oversampling.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Numeric feature matrix (row-major) with a binary label column.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    feature_names: Vec<String>,
    label_name: String,
    features: Vec<f64>,
    labels: Vec<u8>,
}

impl TabularDataset {
    pub fn new(feature_names: Vec<String>, label_name: String, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::input(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let p = feature_names.len();
        let mut features = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != p {
                return Err(Error::Parse { row: i + 1, message: format!("expected {p} features, found {}", row.len()) });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Parse { row: i + 1, message: format!("non-finite feature value {v}") });
            }
            features.extend(row);
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(Error::Parse { row: i + 1, message: format!("label {l} is not binary") });
        }
        Ok(Self { feature_names, label_name, features, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features() + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks(self.n_features().max(1)).take(self.n_rows())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keeps only the named feature columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::input(format!("feature column '{n}' not found")))
            })
            .collect::<Result<_>>()?;
        if idx.is_empty() {
            return Err(Error::input("no feature columns selected"));
        }
        let features = (0..self.n_rows())
            .flat_map(|i| idx.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.value(i, j))
            .collect();
        Ok(Self {
            feature_names: names.to_vec(),
            label_name: self.label_name.clone(),
            features,
            labels: self.labels.clone(),
        })
    }

    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.n_rows() as f64
    }
}

/// Reads comma-separated text with a header row; every column other than
/// `label_column` is a numeric feature.
pub fn load_table(path: impl AsRef<Path>, label_column: &str) -> Result<TabularDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_table(file, label_column)
}

pub fn read_table<R: Read>(reader: R, label_column: &str) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::input(format!("label column '{label_column}' not found")))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| Error::Parse { row: row_no, message: e.to_string() })?;
        let mut row = Vec::with_capacity(feature_names.len());
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                row: row_no,
                message: format!("column '{}' value '{field}' is not numeric", header[j]),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse { row: row_no, message: format!("column '{}' is not finite", header[j]) });
            }
            if j == label_idx {
                labels.push(match value {
                    0.0 => 0,
                    1.0 => 1,
                    v => {
                        return Err(Error::Parse { row: row_no, message: format!("label {v} is not binary") });
                    }
                });
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    TabularDataset::new(feature_names, label_column.to_owned(), rows, labels)
}

/// Writes features followed by the label column. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_table<W: Write>(dataset: &TabularDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = dataset.feature_names.clone();
    header.push(dataset.label_name.clone());
    wtr.write_record(&header)?;
    for (row, label) in dataset.rows().zip(&dataset.labels) {
        let mut record: Vec<String> = row.iter().map(f64::to_string).collect();
        record.push(label.to_string());
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
    pub fractions: [f64; 3],
    pub seed: u64,
}

/// Group sizes for `n` items by largest remainder; ties in the remainder
/// go to the earlier group.
pub fn allocate(n: usize, fractions: &[f64]) -> Result<Vec<usize>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::config("split fractions must be positive"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions sum to {total}, not 1")));
    }
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut by_remainder: Vec<usize> = (0..fractions.len()).collect();
    by_remainder.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &g in by_remainder.iter().take(n.saturating_sub(assigned)) {
        sizes[g] += 1;
    }
    Ok(sizes)
}

/// Uniform random partition of `0..n` into groups sized by `fractions`.
pub fn partition(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    let sizes = allocate(n, fractions)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut groups = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        let mut g = perm[start..start + size].to_vec();
        g.sort_unstable();
        groups.push(g);
        start += size;
    }
    Ok(groups)
}

/// Train / calibration / test partition.
pub fn split(n_rows: usize, fractions: [f64; 3], seed: u64) -> Result<Split> {
    let mut groups = partition(n_rows, &fractions, seed)?.into_iter();
    Ok(Split {
        train: groups.next().unwrap_or_default(),
        calibration: groups.next().unwrap_or_default(),
        test: groups.next().unwrap_or_default(),
        fractions,
        seed,
    })
}

pub const DEFAULT_SMOTE_K: usize = 5;

/// SMOTE: for each minority row, `rate_percent / 100` synthetic rows on the
/// segments to randomly chosen members of its `k` nearest minority
/// neighbours. Each feature uses its own uniform interpolation fraction.
/// Synthetic rows are appended after the original rows.
pub fn smote(dataset: &TabularDataset, rate_percent: usize, k: usize, seed: u64) -> Result<TabularDataset> {
    if rate_percent == 0 || !rate_percent.is_multiple_of(100) {
        return Err(Error::config(format!("SMOTE rate must be a positive multiple of 100, got {rate_percent}")));
    }
    if k == 0 {
        return Err(Error::config("SMOTE needs at least one neighbour"));
    }
    let positives = dataset.labels.iter().filter(|&&l| l == 1).count();
    let minority_label = u8::from(positives <= dataset.n_rows() - positives);
    let minority: Vec<usize> = (0..dataset.n_rows()).filter(|&i| dataset.labels[i] == minority_label).collect();
    if minority.len() < k + 1 {
        return Err(Error::input(format!(
            "minority class has {} rows; SMOTE with k = {k} needs at least {}",
            minority.len(),
            k + 1
        )));
    }

    let per_row = rate_percent / 100;
    let p = dataset.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    out.features.reserve(minority.len() * per_row * p);

    for &i in &minority {
        let neighbors = nearest_minority(dataset, &minority, i, k);
        let base = dataset.row(i);
        for _ in 0..per_row {
            let nb = dataset.row(neighbors[rng.random_range(0..neighbors.len())]);
            for j in 0..p {
                let gap: f64 = rng.random();
                out.features.push(base[j] + gap * (nb[j] - base[j]));
            }
            out.labels.push(minority_label);
        }
    }
    Ok(out)
}

fn nearest_minority(dataset: &TabularDataset, minority: &[usize], i: usize, k: usize) -> Vec<usize> {
    let base = dataset.row(i);
    let mut dist: Vec<(f64, usize)> = minority
        .iter()
        .filter(|&&m| m != i)
        .map(|&m| {
            let d: f64 = dataset.row(m).iter().zip(base).map(|(a, b)| (a - b).powi(2)).sum();
            (d, m)
        })
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.into_iter().take(k).map(|(_, m)| m).collect()
}
