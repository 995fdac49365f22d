//! Replication studies over synthetic and tabular data.
//!
//! Every study returns a long-format [`StudyTable`] with one row per
//! (replication, scenario, method, split, metric) cell. Cells whose
//! computation fails hold NaN rather than being dropped. Replication `r`
//! draws all of its randomness from `seed + r`, so replications can be run
//! or removed independently.

mod config;
pub mod svg;
mod table;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    default_scenarios, parse_number, Metric, MetricSettings, RfStudyConfig, Scenario, StudyConfig, DEFAULT_BOOTSTRAP,
    DEFAULT_SMOTE_RATE, DESK_REPLICATIONS, DESK_RF_SPLITS, PAPER_REPLICATIONS, PAPER_RF_SPLITS,
};
pub use table::{format_value, write_summary_csv, SplitRole, StudyRow, StudyTable, SummaryRow, TABLE_HEADER};

use crate::data::{self, TabularDataset};
use crate::dgp::{self, DgpConfig};
use crate::error::{Error, Result};
use crate::forest::{self, ForestConfig, ForestKind, GridResult};
use crate::locreg::{linear_grid, LocalFit};
use crate::metrics::{self, bootstrap_rows, LabeledScores};
use crate::recalib::{self, Method};

/// Method label of the unrecalibrated scores in recalibration tables.
pub const UNCALIBRATED: &str = "uncalibrated";
pub const P_TRUE: &str = "p_true";
pub const P_U: &str = "p_u";

const DGP_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const BAND_STREAM: u64 = 3;
const SMOTE_STREAM: u64 = 4;
const HOLDOUT_STREAM: u64 = 5;

/// Seed of replication `index`.
pub fn replication_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for one purpose (data, split, ...) within a replication,
/// so generators seeded from the same replication seed never share a stream.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Metric values in `metrics` order, plus the degree-0 calibration curve when
/// it was computed. Failed metrics are NaN.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub curve: Option<LocalFit>,
}

pub fn evaluate(data: &LabeledScores, metric_list: &[Metric], settings: &MetricSettings, want_curve: bool) -> Evaluation {
    let need_curve = want_curve || metric_list.contains(&Metric::Lcs);
    let curve = if need_curve && data.len() >= 2 {
        crate::locreg::smoothed_calibration_curve(data.scores(), data.labels(), &settings.locreg).ok()
    } else {
        None
    };
    let report = metrics::classification_report(data, settings.threshold).ok();
    let values = metric_list
        .iter()
        .map(|m| match m {
            Metric::Brier => metrics::brier(data),
            Metric::Mse => metrics::true_mse(data, data.scores()).unwrap_or(f64::NAN),
            Metric::Ece => metrics::ece(data, settings.ece_bins, settings.threshold).unwrap_or(f64::NAN),
            Metric::Lcs => curve.as_ref().map_or(f64::NAN, |c| metrics::lcs_from_curve(c, data.scores())),
            Metric::Auc => metrics::auc(data).unwrap_or(f64::NAN),
            Metric::Accuracy => report.as_ref().map_or(f64::NAN, |r| r.accuracy),
            Metric::Sensitivity => report.as_ref().map_or(f64::NAN, |r| r.sensitivity),
            Metric::Specificity => report.as_ref().map_or(f64::NAN, |r| r.specificity),
        })
        .collect();
    Evaluation { values, curve }
}

/// Curve values on `grid`, NaN outside the range of `scores`.
fn curve_on_common_grid(curve: Option<&LocalFit>, scores: &[f64], grid: &[f64]) -> Vec<f64> {
    let Some(curve) = curve else {
        return vec![f64::NAN; grid.len()];
    };
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    grid.iter()
        .map(|&g| {
            if g < lo || g > hi {
                f64::NAN
            } else {
                curve.predict_one(g).unwrap_or(f64::NAN)
            }
        })
        .collect()
}

/// Mean calibration curve across replications with a percentile bootstrap
/// band. Replications whose score range excludes a grid point do not
/// contribute there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveBand {
    pub scenario: String,
    pub method: String,
    pub split: SplitRole,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Replications contributing at each grid point.
    pub count: Vec<usize>,
}

fn nan_mean_columns(curves: &[Vec<f64>], rows: impl Iterator<Item = usize> + Clone, width: usize) -> Vec<f64> {
    (0..width)
        .map(|j| {
            let (sum, n) = rows
                .clone()
                .map(|r| curves[r][j])
                .filter(|v| !v.is_nan())
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 {
                f64::NAN
            } else {
                sum / n as f64
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn band(
    scenario: &str,
    method: &str,
    split: SplitRole,
    grid: &[f64],
    curves: &[Vec<f64>],
    n_boot: usize,
    level: f64,
    seed: u64,
) -> Result<CurveBand> {
    let width = grid.len();
    let mean = nan_mean_columns(curves, 0..curves.len(), width);
    let intervals = bootstrap_rows(
        curves.len(),
        |idx| Ok(nan_mean_columns(curves, idx.iter().copied(), width)),
        n_boot,
        level,
        seed,
    )?;
    let count = (0..width).map(|j| curves.iter().filter(|c| !c[j].is_nan()).count()).collect();
    Ok(CurveBand {
        scenario: scenario.to_owned(),
        method: method.to_owned(),
        split,
        grid: grid.to_vec(),
        mean,
        lo: intervals.iter().map(|i| i.lo).collect(),
        hi: intervals.iter().map(|i| i.hi).collect(),
        count,
    })
}

pub fn write_curves_csv<W: Write>(bands: &[CurveBand], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["scenario", "method", "split", "grid", "mean", "lo", "hi", "count"])?;
    for b in bands {
        for j in 0..b.grid.len() {
            wtr.write_record([
                b.scenario.clone(),
                b.method.clone(),
                b.split.name().to_owned(),
                format_value(b.grid[j]),
                format_value(b.mean[j]),
                format_value(b.lo[j]),
                format_value(b.hi[j]),
                b.count[j].to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Output of a study: the long table and calibration-curve bands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOutput {
    pub table: StudyTable,
    pub curves: Vec<CurveBand>,
}

/// Per-replication curves keyed by (scenario index, method label, split).
type CurveStore = BTreeMap<(usize, String, SplitRole), Vec<Vec<f64>>>;

fn bands_from_store(
    store: CurveStore,
    scenarios: &[String],
    grid: &[f64],
    n_boot: usize,
    level: f64,
    seed: u64,
    method_order: &[String],
) -> Result<Vec<CurveBand>> {
    let band_seed = stream_seed(seed, BAND_STREAM);
    let mut keys: Vec<_> = store.keys().cloned().collect();
    let rank = |m: &String| method_order.iter().position(|o| o == m).unwrap_or(usize::MAX);
    keys.sort_by_key(|a| (a.0, rank(&a.1), a.2));
    keys.iter()
        .enumerate()
        .map(|(i, key)| {
            band(&scenarios[key.0], &key.1, key.2, grid, &store[key], n_boot, level, stream_seed(band_seed, i as u64))
        })
        .collect()
}

struct Replication {
    table: StudyTable,
    curves: Vec<((usize, String, SplitRole), Vec<f64>)>,
}

fn merge(reps: Vec<Replication>) -> (StudyTable, CurveStore) {
    let mut table = StudyTable::default();
    let mut store = CurveStore::new();
    for rep in reps {
        table.extend(rep.table);
        for (key, curve) in rep.curves {
            store.entry(key).or_default().push(curve);
        }
    }
    (table, store)
}

fn push_values(table: &mut StudyTable, rep: usize, scenario: &str, method: &str, split: SplitRole, metric_list: &[Metric], values: &[f64]) {
    for (m, v) in metric_list.iter().zip(values) {
        table.push(rep, scenario, method, split, m.name(), *v);
    }
}

fn synthetic_sample(config: &StudyConfig, rep_seed: u64) -> Result<Vec<dgp::SyntheticSample>> {
    let dgp_config = DgpConfig {
        noise_sd: config.noise_sd,
        ..DgpConfig::new(config.n, stream_seed(rep_seed, DGP_STREAM))
    };
    dgp::generate(&dgp_config)
}

fn labeled(samples: &[dgp::SyntheticSample], scores: Vec<f64>) -> Result<LabeledScores> {
    LabeledScores::new(
        scores,
        samples.iter().map(|s| s.d).collect(),
        Some(samples.iter().map(|s| s.p_true).collect()),
    )
}

/// Per replication and scenario: metrics of the distorted scores `p_u` and of
/// the generating probabilities `p_true` on the whole sample. All scenarios of
/// a replication share one DGP draw.
pub fn run_distortion_study(config: &StudyConfig) -> Result<StudyOutput> {
    config.validate()?;
    let scenarios = config.scenario_list()?;
    let metric_list = config.metric_list()?;
    let settings = config.metric_settings();
    let grid = linear_grid(0.0, 1.0, config.grid_size);
    let methods = [P_TRUE.to_owned(), P_U.to_owned()];

    let reps: Vec<Replication> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let sample = synthetic_sample(config, replication_seed(config.seed, rep));
            let mut table = StudyTable::default();
            let mut curves = Vec::new();
            for (si, scenario) in scenarios.iter().enumerate() {
                for method in &methods {
                    let data = sample.as_ref().ok().and_then(|s| {
                        let scores = if method == P_TRUE {
                            s.iter().map(|x| x.p_true).collect()
                        } else {
                            dgp::distort(s, &scenario.spec).ok()?
                        };
                        labeled(s, scores).ok()
                    });
                    let (values, curve) = match &data {
                        Some(d) => {
                            let ev = evaluate(d, &metric_list, &settings, true);
                            let c = curve_on_common_grid(ev.curve.as_ref(), d.scores(), &grid);
                            (ev.values, c)
                        }
                        None => (vec![f64::NAN; metric_list.len()], vec![f64::NAN; grid.len()]),
                    };
                    push_values(&mut table, rep, &scenario.label, method, SplitRole::All, &metric_list, &values);
                    curves.push(((si, method.clone(), SplitRole::All), curve));
                }
            }
            Replication { table, curves }
        })
        .collect();

    let (table, store) = merge(reps);
    let labels: Vec<String> = scenarios.iter().map(|s| s.label.clone()).collect();
    let curves = bands_from_store(store, &labels, &grid, config.bootstrap, config.level, config.seed, &methods)?;
    Ok(StudyOutput { table, curves })
}

/// Metric cells for the unrecalibrated scores and every recalibration method
/// on one calibration/test split. Returns test-split curves on `grid`.
#[allow(clippy::too_many_arguments)]
fn recalibration_cells(
    table: &mut StudyTable,
    rep: usize,
    scenario: &str,
    split: Option<(&LabeledScores, &LabeledScores)>,
    methods: &[Method],
    metric_list: &[Metric],
    settings: &MetricSettings,
    grid: &[f64],
) -> Vec<(String, Vec<f64>)> {
    let nan_values = vec![f64::NAN; metric_list.len()];
    let nan_curve = vec![f64::NAN; grid.len()];
    let mut curves = Vec::new();
    let labels = std::iter::once(UNCALIBRATED.to_owned()).chain(methods.iter().map(|m| m.name().to_owned()));
    for (mi, label) in labels.enumerate() {
        let recalibrated = split.and_then(|(cal, test)| {
            if mi == 0 {
                return Some((cal.clone(), test.clone()));
            }
            let fitted = recalib::fit(methods[mi - 1], cal, &settings.locreg).ok()?;
            let cal_scores = fitted.apply(cal.scores()).ok()?;
            let test_scores = fitted.apply(test.scores()).ok()?;
            Some((cal.with_scores(cal_scores).ok()?, test.with_scores(test_scores).ok()?))
        });
        match &recalibrated {
            Some((cal, test)) => {
                let ev_cal = evaluate(cal, metric_list, settings, false);
                push_values(table, rep, scenario, &label, SplitRole::Calibration, metric_list, &ev_cal.values);
                let ev_test = evaluate(test, metric_list, settings, true);
                push_values(table, rep, scenario, &label, SplitRole::Test, metric_list, &ev_test.values);
                curves.push((label, curve_on_common_grid(ev_test.curve.as_ref(), test.scores(), grid)));
            }
            None => {
                push_values(table, rep, scenario, &label, SplitRole::Calibration, metric_list, &nan_values);
                push_values(table, rep, scenario, &label, SplitRole::Test, metric_list, &nan_values);
                curves.push((label, nan_curve.clone()));
            }
        }
    }
    curves
}

fn method_labels(methods: &[Method]) -> Vec<String> {
    std::iter::once(UNCALIBRATED.to_owned())
        .chain(methods.iter().map(|m| m.name().to_owned()))
        .collect()
}

/// Per replication and scenario: split the sample into calibration and test
/// parts, fit each recalibrator on the calibration part and record raw metric
/// values for the uncalibrated and recalibrated scores on both parts. Use
/// [`StudyTable::deltas`] with [`UNCALIBRATED`] for method-minus-uncalibrated
/// differences.
pub fn run_recalibration_study(config: &StudyConfig) -> Result<StudyOutput> {
    config.validate()?;
    let scenarios = config.scenario_list()?;
    let methods = config.method_list()?;
    let metric_list = config.metric_list()?;
    let settings = config.metric_settings();
    let grid = linear_grid(0.0, 1.0, config.grid_size);

    let reps: Vec<Replication> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = replication_seed(config.seed, rep);
            let sample = synthetic_sample(config, rep_seed);
            let parts = data::partition(config.n, &config.split, stream_seed(rep_seed, SPLIT_STREAM));
            let mut table = StudyTable::default();
            let mut curves = Vec::new();
            for (si, scenario) in scenarios.iter().enumerate() {
                let full = match (&sample, &parts) {
                    (Ok(s), Ok(_)) => dgp::distort(s, &scenario.spec).ok().and_then(|p| labeled(s, p).ok()),
                    _ => None,
                };
                let halves = match (&full, &parts) {
                    (Some(full), Ok(parts)) => Some((full.subset(&parts[0]), full.subset(&parts[1]))),
                    _ => None,
                };
                let split = halves.as_ref().map(|(c, t)| (c, t));
                let rep_curves =
                    recalibration_cells(&mut table, rep, &scenario.label, split, &methods, &metric_list, &settings, &grid);
                curves.extend(rep_curves.into_iter().map(|(m, c)| ((si, m, SplitRole::Test), c)));
            }
            Replication { table, curves }
        })
        .collect();

    let (table, store) = merge(reps);
    let labels: Vec<String> = scenarios.iter().map(|s| s.label.clone()).collect();
    let curves =
        bands_from_store(store, &labels, &grid, config.bootstrap, config.level, config.seed, &method_labels(&methods))?;
    Ok(StudyOutput { table, curves })
}

/// Label of one grid configuration in the trace table.
pub fn config_label(config: &ForestConfig) -> String {
    format!("ntree={} mtry={} nodesize={}", config.ntree, config.mtry, config.nodesize)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RfStudyOutput {
    /// Scenario column holds the forest kind.
    pub table: StudyTable,
    /// AUC and LCS of every grid configuration on every split; the method
    /// column holds the configuration label.
    pub trace: StudyTable,
    pub grids: Vec<(ForestKind, GridResult)>,
    pub curves: Vec<CurveBand>,
}

pub fn write_grid_csv<W: Write>(grids: &[(ForestKind, GridResult)], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["kind", "ntree", "mtry", "nodesize", "criterion", "selected"])?;
    for (kind, grid) in grids {
        for (i, e) in grid.entries.iter().enumerate() {
            wtr.write_record([
                kind.name().to_owned(),
                e.config.ntree.to_string(),
                e.config.mtry.to_string(),
                e.config.nodesize.to_string(),
                format_value(e.oob.criterion),
                u8::from(i == grid.best).to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub const RF_KINDS: [ForestKind; 2] = [ForestKind::Classifier, ForestKind::Regressor];

/// Grows classifier and regressor forests over the configured grid on a
/// training share of `dataset` (optionally SMOTE-oversampled), keeps each
/// kind's OOB-best configuration, and re-splits the held-out predictions
/// `config.splits` times into calibration and test halves to compare the
/// recalibration methods.
pub fn run_rf_study(dataset: &TabularDataset, config: &RfStudyConfig) -> Result<RfStudyOutput> {
    config.validate()?;
    let methods = config.method_list()?;
    let metric_list = config.metric_list()?;
    let settings = config.metric_settings();
    let positives = dataset.labels().iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == dataset.n_rows() {
        return Err(Error::SingleClass(dataset.labels()[0]));
    }

    let fractions = [config.train_fraction, 1.0 - config.train_fraction];
    let parts = data::partition(dataset.n_rows(), &fractions, stream_seed(config.seed, HOLDOUT_STREAM))?;
    let mut train = dataset.subset(&parts[0]);
    if config.smote_rate > 0 {
        train = data::smote(&train, config.smote_rate, config.smote_k, stream_seed(config.seed, SMOTE_STREAM))?;
    }
    let holdout = dataset.subset(&parts[1]);
    if holdout.n_rows() < 4 {
        return Err(Error::input("held-out share is too small to split into calibration and test parts"));
    }

    let mut grids = Vec::new();
    let mut predictions: Vec<(Vec<ForestConfig>, Vec<Vec<f64>>, usize)> = Vec::new();
    for kind in RF_KINDS {
        let grid = config.grid(kind, dataset.n_features());
        let mut preds = vec![Vec::new(); grid.len()];
        let result = forest::grid_search_with(&train, &grid, |i, f| {
            preds[i] = f.predict_dataset(&holdout)?;
            Ok(())
        })?;
        predictions.push((grid, preds, result.best));
        grids.push((kind, result));
    }

    let grid_points = linear_grid(0.0, 1.0, config.grid_size);
    let trace_metrics = [Metric::Auc, Metric::Lcs];
    let per_split: Vec<(Replication, StudyTable)> = (0..config.splits)
        .into_par_iter()
        .map(|s| {
            let split_seed = replication_seed(config.seed, s);
            let halves = data::partition(holdout.n_rows(), &[0.5, 0.5], stream_seed(split_seed, SPLIT_STREAM)).ok();
            let mut table = StudyTable::default();
            let mut trace = StudyTable::default();
            let mut curves = Vec::new();
            for (ki, kind) in RF_KINDS.iter().enumerate() {
                let (grid, preds, best) = &predictions[ki];
                let split_scores = |scores: &Vec<f64>| {
                    let halves = halves.as_ref()?;
                    let full = LabeledScores::new(scores.clone(), holdout.labels().to_vec(), None).ok()?;
                    Some((full.subset(&halves[0]), full.subset(&halves[1])))
                };
                let best_split = split_scores(&preds[*best]);
                let rep_curves = recalibration_cells(
                    &mut table,
                    s,
                    kind.name(),
                    best_split.as_ref().map(|(c, t)| (c, t)),
                    &methods,
                    &metric_list,
                    &settings,
                    &grid_points,
                );
                curves.extend(rep_curves.into_iter().map(|(m, c)| ((ki, m, SplitRole::Test), c)));
                for (cfg, scores) in grid.iter().zip(preds) {
                    let label = config_label(cfg);
                    let pair = split_scores(scores);
                    for (role, part) in [(SplitRole::Calibration, 0), (SplitRole::Test, 1)] {
                        let values = match &pair {
                            Some(p) => evaluate(if part == 0 { &p.0 } else { &p.1 }, &trace_metrics, &settings, false).values,
                            None => vec![f64::NAN; trace_metrics.len()],
                        };
                        push_values(&mut trace, s, kind.name(), &label, role, &trace_metrics, &values);
                    }
                }
            }
            (Replication { table, curves }, trace)
        })
        .collect();

    let mut trace = StudyTable::default();
    let mut reps = Vec::with_capacity(per_split.len());
    for (rep, t) in per_split {
        trace.extend(t);
        reps.push(rep);
    }
    let (table, store) = merge(reps);
    let kind_labels: Vec<String> = RF_KINDS.iter().map(|k| k.name().to_owned()).collect();
    let curves = bands_from_store(
        store,
        &kind_labels,
        &grid_points,
        config.bootstrap,
        config.level,
        config.seed,
        &method_labels(&methods),
    )?;
    Ok(RfStudyOutput { table, trace, grids, curves })
}
