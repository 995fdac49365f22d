use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dgp::{DistortionKind, DistortionSpec, DEFAULT_NOISE_SD};
use crate::error::{Error, Result};
use crate::forest::{self, ForestConfig, ForestKind};
use crate::locreg::{LocRegConfig, DEFAULT_GRID_SIZE, DEFAULT_NEIGHBOR_FRACTION};
use crate::metrics::{DEFAULT_ECE_BINS, DEFAULT_THRESHOLD};
use crate::recalib::Method;

pub const DESK_REPLICATIONS: usize = 50;
pub const PAPER_REPLICATIONS: usize = 200;
pub const DESK_RF_SPLITS: usize = 20;
pub const PAPER_RF_SPLITS: usize = 200;
pub const DEFAULT_BOOTSTRAP: usize = 200;
pub const DEFAULT_SMOTE_RATE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Brier,
    /// Squared error against the generating probabilities.
    Mse,
    Ece,
    Lcs,
    Auc,
    Accuracy,
    Sensitivity,
    Specificity,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Brier,
        Metric::Mse,
        Metric::Ece,
        Metric::Lcs,
        Metric::Auc,
        Metric::Accuracy,
        Metric::Sensitivity,
        Metric::Specificity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Brier => "brier",
            Metric::Mse => "mse",
            Metric::Ece => "ece",
            Metric::Lcs => "lcs",
            Metric::Auc => "auc",
            Metric::Accuracy => "accuracy",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown metric '{s}'")))
    }
}

/// A distortion together with the label it carries in output tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub label: String,
    pub spec: DistortionSpec,
}

pub fn parse_number(text: &str) -> Result<f64> {
    let bad = || Error::config(format!("cannot parse '{text}' as a number or fraction"));
    match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            Ok(num / den)
        }
        None => text.trim().parse().map_err(|_| bad()),
    }
}

impl FromStr for Scenario {
    type Err = Error;

    /// `alpha:<v>`, `gamma:<v>` or `none`; `<v>` may be a fraction such as `1/3`.
    fn from_str(s: &str) -> Result<Self> {
        let spec = match s.trim().split_once(':') {
            None if s.trim() == "none" => DistortionSpec::identity(),
            Some(("alpha", v)) => DistortionSpec::alpha(parse_number(v)?),
            Some(("gamma", v)) => DistortionSpec::gamma(parse_number(v)?),
            _ => return Err(Error::config(format!("unknown scenario '{s}'; expected alpha:<v>, gamma:<v> or none"))),
        };
        spec.validate()?;
        Ok(Scenario { label: s.trim().to_owned(), spec })
    }
}

impl Scenario {
    pub fn kind(&self) -> DistortionKind {
        self.spec.kind
    }
}

pub fn default_scenarios() -> Vec<String> {
    ["alpha:1/3", "alpha:1", "alpha:3", "gamma:1/3", "gamma:1", "gamma:3"]
        .map(String::from)
        .to_vec()
}

fn all_methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.name().to_owned()).collect()
}

fn parse_list<T: FromStr<Err = Error>>(items: &[String], what: &str) -> Result<Vec<T>> {
    if items.is_empty() {
        return Err(Error::config(format!("{what} list is empty")));
    }
    let mut seen = Vec::new();
    for item in items {
        if seen.contains(item) {
            return Err(Error::config(format!("{what} '{item}' listed twice")));
        }
        seen.push(item.clone());
    }
    items.iter().map(|s| s.parse()).collect()
}

/// Settings shared by every metric evaluation in a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSettings {
    pub ece_bins: usize,
    pub threshold: f64,
    pub locreg: LocRegConfig,
}

/// Synthetic-data studies (distortion and recalibration). Read from a flat
/// TOML file; every key is optional and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub scenarios: Vec<String>,
    /// Observations per replication.
    pub n: usize,
    pub replications: usize,
    /// Recalibration methods (ignored by the distortion study).
    pub methods: Vec<String>,
    pub metrics: Vec<String>,
    pub seed: u64,
    /// Calibration and test shares of each replication.
    pub split: [f64; 2],
    pub noise_sd: f64,
    pub neighbor_fraction: f64,
    pub grid_size: usize,
    pub ece_bins: usize,
    pub threshold: f64,
    /// Resamples behind each calibration-curve band.
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenarios: default_scenarios(),
            n: 2000,
            replications: DESK_REPLICATIONS,
            methods: all_methods(),
            metrics: Metric::ALL.iter().map(|m| m.name().to_owned()).collect(),
            seed: 0,
            split: [0.5, 0.5],
            noise_sd: DEFAULT_NOISE_SD,
            neighbor_fraction: DEFAULT_NEIGHBOR_FRACTION,
            grid_size: DEFAULT_GRID_SIZE,
            ece_bins: DEFAULT_ECE_BINS,
            threshold: DEFAULT_THRESHOLD,
            bootstrap: DEFAULT_BOOTSTRAP,
            level: 0.95,
        }
    }
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("study config: {}", e.message())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn scenario_list(&self) -> Result<Vec<Scenario>> {
        parse_list(&self.scenarios, "scenario")
    }

    pub fn method_list(&self) -> Result<Vec<Method>> {
        parse_list(&self.methods, "method")
    }

    pub fn metric_list(&self) -> Result<Vec<Metric>> {
        parse_list(&self.metrics, "metric")
    }

    pub fn locreg(&self) -> LocRegConfig {
        LocRegConfig { degree: 0, neighbor_fraction: self.neighbor_fraction, grid_size: self.grid_size }
    }

    pub fn metric_settings(&self) -> MetricSettings {
        MetricSettings { ece_bins: self.ece_bins, threshold: self.threshold, locreg: self.locreg() }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario_list()?;
        self.method_list()?;
        self.metric_list()?;
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.n < 4 {
            return Err(Error::config(format!("n must be at least 4, got {}", self.n)));
        }
        if self.split.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::config("split fractions must be positive"));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config("noise_sd must be positive"));
        }
        if self.ece_bins == 0 {
            return Err(Error::config("ece_bins must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("threshold must lie in [0, 1]"));
        }
        if self.bootstrap < 2 {
            return Err(Error::config("bootstrap must be at least 2"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config("level must lie in (0, 1)"));
        }
        self.locreg().validate()
    }
}

/// Random-forest calibration study on a tabular dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfStudyConfig {
    pub ntree: Vec<usize>,
    /// Values above the feature count are clamped to it.
    pub mtry: Vec<usize>,
    pub nodesize: Vec<usize>,
    /// Calibration/test re-splits of the held-out predictions.
    pub splits: usize,
    pub seed: u64,
    /// Share of rows used to grow the forests.
    pub train_fraction: f64,
    /// SMOTE oversampling rate in percent applied to the training rows; 0 disables it.
    pub smote_rate: usize,
    pub smote_k: usize,
    pub methods: Vec<String>,
    pub metrics: Vec<String>,
    pub neighbor_fraction: f64,
    pub grid_size: usize,
    pub ece_bins: usize,
    pub threshold: f64,
    pub bootstrap: usize,
    pub level: f64,
}

impl Default for RfStudyConfig {
    fn default() -> Self {
        Self {
            ntree: forest::DESK_NTREE.to_vec(),
            mtry: forest::DESK_MTRY.to_vec(),
            nodesize: forest::DESK_NODESIZE.to_vec(),
            splits: DESK_RF_SPLITS,
            seed: 0,
            train_fraction: 0.5,
            smote_rate: 0,
            smote_k: crate::data::DEFAULT_SMOTE_K,
            methods: all_methods(),
            metrics: ["auc", "lcs", "brier", "ece", "accuracy", "sensitivity", "specificity"]
                .map(String::from)
                .to_vec(),
            neighbor_fraction: DEFAULT_NEIGHBOR_FRACTION,
            grid_size: DEFAULT_GRID_SIZE,
            ece_bins: DEFAULT_ECE_BINS,
            threshold: DEFAULT_THRESHOLD,
            bootstrap: DEFAULT_BOOTSTRAP,
            level: 0.95,
        }
    }
}

impl RfStudyConfig {
    /// Full grid: ntree {100, 300, 500}, mtry 1..=p/2, nodesize {5, 10, 15, 20}, 200 splits.
    pub fn paper_scale(mut self, n_features: usize) -> Self {
        let grid = forest::paper_grid(ForestKind::Regressor, n_features, self.seed);
        let mut mtry: Vec<usize> = grid.iter().map(|c| c.mtry).collect();
        mtry.sort_unstable();
        mtry.dedup();
        self.ntree = vec![100, 300, 500];
        self.mtry = mtry;
        self.nodesize = vec![5, 10, 15, 20];
        self.splits = PAPER_RF_SPLITS;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("rf study config: {}", e.message())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn method_list(&self) -> Result<Vec<Method>> {
        parse_list(&self.methods, "method")
    }

    pub fn metric_list(&self) -> Result<Vec<Metric>> {
        parse_list(&self.metrics, "metric")
    }

    pub fn grid(&self, kind: ForestKind, n_features: usize) -> Vec<ForestConfig> {
        forest::build_grid(kind, &self.ntree, &self.mtry, &self.nodesize, n_features, self.seed)
    }

    pub fn metric_settings(&self) -> MetricSettings {
        MetricSettings {
            ece_bins: self.ece_bins,
            threshold: self.threshold,
            locreg: LocRegConfig { degree: 0, neighbor_fraction: self.neighbor_fraction, grid_size: self.grid_size },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.method_list()?;
        self.metric_list()?;
        if self.ntree.is_empty() || self.mtry.is_empty() || self.nodesize.is_empty() {
            return Err(Error::config("every grid dimension needs at least one value"));
        }
        if self.ntree.contains(&0) || self.mtry.contains(&0) || self.nodesize.contains(&0) {
            return Err(Error::config("grid values must be at least 1"));
        }
        if self.splits == 0 {
            return Err(Error::config("splits must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must lie in (0, 1)"));
        }
        if self.smote_rate > 0 && self.smote_k == 0 {
            return Err(Error::config("smote_k must be at least 1"));
        }
        if self.ece_bins == 0 {
            return Err(Error::config("ece_bins must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("threshold must lie in [0, 1]"));
        }
        if self.bootstrap < 2 {
            return Err(Error::config("bootstrap must be at least 2"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config("level must lie in (0, 1)"));
        }
        self.metric_settings().locreg.validate()
    }
}
