use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::metrics::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    /// The whole replication sample (no calibration/test split).
    All,
    Calibration,
    Test,
}

impl SplitRole {
    pub fn name(self) -> &'static str {
        match self {
            SplitRole::All => "all",
            SplitRole::Calibration => "calibration",
            SplitRole::Test => "test",
        }
    }
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub replication: usize,
    pub scenario: String,
    pub method: String,
    pub split: SplitRole,
    pub metric: String,
    /// NaN marks a cell whose computation failed.
    pub value: f64,
}

/// Long-format study results.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

pub const TABLE_HEADER: [&str; 6] = ["replication", "scenario", "method", "split", "metric", "value"];

/// Shortest round-trip decimal; NaN is written as `NaN`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_owned()
    } else {
        v.to_string()
    }
}

impl StudyTable {
    pub fn push(&mut self, replication: usize, scenario: &str, method: &str, split: SplitRole, metric: &str, value: f64) {
        self.rows.push(StudyRow {
            replication,
            scenario: scenario.to_owned(),
            method: method.to_owned(),
            split,
            metric: metric.to_owned(),
            value,
        });
    }

    pub fn extend(&mut self, other: StudyTable) {
        self.rows.extend(other.rows);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(TABLE_HEADER)?;
        for r in &self.rows {
            wtr.write_record([
                r.replication.to_string(),
                r.scenario.clone(),
                r.method.clone(),
                r.split.name().to_owned(),
                r.metric.clone(),
                format_value(r.value),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    /// Values of one cell across replications, in row order.
    pub fn values(&self, scenario: &str, method: &str, split: SplitRole, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.scenario == scenario && r.method == method && r.split == split && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    /// `value(method) - value(baseline)` for every non-baseline row with a
    /// matching baseline row.
    pub fn deltas(&self, baseline: &str) -> StudyTable {
        let base: BTreeMap<(usize, &str, SplitRole, &str), f64> = self
            .rows
            .iter()
            .filter(|r| r.method == baseline)
            .map(|r| ((r.replication, r.scenario.as_str(), r.split, r.metric.as_str()), r.value))
            .collect();
        let rows = self
            .rows
            .iter()
            .filter(|r| r.method != baseline)
            .filter_map(|r| {
                base.get(&(r.replication, r.scenario.as_str(), r.split, r.metric.as_str()))
                    .map(|b| StudyRow { value: r.value - b, ..r.clone() })
            })
            .collect();
        StudyTable { rows }
    }

    /// Per-cell summaries over replications, ignoring NaN cells.
    pub fn summarize(&self) -> Vec<SummaryRow> {
        type Cell<'a> = (&'a str, &'a str, SplitRole, &'a str);
        let mut cells: BTreeMap<Cell, (usize, Vec<f64>)> = BTreeMap::new();
        let mut order = Vec::new();
        for r in &self.rows {
            let key = (r.scenario.as_str(), r.method.as_str(), r.split, r.metric.as_str());
            let entry = cells.entry(key).or_insert_with(|| {
                order.push(key);
                (0, Vec::new())
            });
            entry.0 += 1;
            if !r.value.is_nan() {
                entry.1.push(r.value);
            }
        }
        order
            .into_iter()
            .map(|key| {
                let (rows, mut vals) = cells.remove(&key).expect("cell recorded");
                vals.sort_by(f64::total_cmp);
                let stat = |q: f64| if vals.is_empty() { f64::NAN } else { quantile_sorted(&vals, q) };
                SummaryRow {
                    scenario: key.0.to_owned(),
                    method: key.1.to_owned(),
                    split: key.2,
                    metric: key.3.to_owned(),
                    rows,
                    failed: rows - vals.len(),
                    mean: if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / vals.len() as f64 },
                    median: stat(0.5),
                    q025: stat(0.025),
                    q975: stat(0.975),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub split: SplitRole,
    pub metric: String,
    pub rows: usize,
    pub failed: usize,
    pub mean: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["scenario", "method", "split", "metric", "rows", "failed", "mean", "median", "q025", "q975"])?;
    for r in rows {
        wtr.write_record([
            r.scenario.clone(),
            r.method.clone(),
            r.split.name().to_owned(),
            r.metric.clone(),
            r.rows.to_string(),
            r.failed.to_string(),
            format_value(r.mean),
            format_value(r.median),
            format_value(r.q025),
            format_value(r.q975),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
