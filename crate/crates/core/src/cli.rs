//! Command-line front end.
//!
//! Every run writes its effective configuration as JSON to
//! `<out>.config.json` (for `metrics` without `--out`, next to the input as
//! `<in>.metrics.config.json`). Exit status is 0 on success, 1 when the
//! request is invalid and 2 when a valid request fails while running; the
//! reason goes to standard error as one line, `error[validation]: ...` or
//! `error[runtime]: ...`.
//!
//! # CSV schemas
//!
//! All files have a header row, comma separators and `\n` line ends. Floats
//! use the shortest decimal that parses back to the same value; undefined
//! values are written as `NaN`.
//!
//! - `simulate`: `x1,x2,x3,x4,eta,p_true,p_u,d` with `d` in {0, 1}.
//! - `metrics`: `metric,value`; rows `n`, `brier`, `mse` (only with a true
//!   probability column), `ece`, `lcs`, `auc`, `accuracy`, `sensitivity`,
//!   `specificity`, `tp`, `fp`, `tn`, `fn`.
//! - `curve`: `grid,estimate`, plus `lo,hi` with `--bootstrap`.
//! - `recalibrate`: `score,recalibrated,label`; the fitted map goes to the
//!   `--params` JSON file.
//! - `rf train`: `score,label` for the scored rows.
//! - `rf grid`: `ntree,mtry,nodesize,criterion,selected`.
//! - `study`: `study.csv` (`replication,scenario,method,split,metric,value`),
//!   `summary.csv` (`scenario,method,split,metric,rows,failed,mean,median,q025,q975`),
//!   `curves.csv` (`scenario,method,split,grid,mean,lo,hi,count`); the
//!   recalibration and rf studies add `deltas.csv` and `delta_summary.csv`
//!   (method minus uncalibrated), and the rf study adds `trace.csv` and
//!   `grid.csv` (`kind,ntree,mtry,nodesize,criterion,selected`).
//!
//! Score inputs are located by column name: `--score-col` (default `score`,
//! else `p_u`), `--label-col` (default `label`, else `d`) and `--true-col`
//! (default `true_p`, else `p_true`, optional).

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{self, TabularDataset};
use crate::dgp::{self, DgpConfig, DistortionSpec, DEFAULT_NOISE_SD};
use crate::error::{Error, Result};
use crate::forest::{self, ForestConfig, ForestKind};
use crate::harness::{
    self, format_value, parse_number, svg, CurveBand, Metric, RfStudyConfig, SplitRole, StudyConfig, StudyTable,
    P_TRUE, P_U, PAPER_REPLICATIONS, UNCALIBRATED,
};
use crate::locreg::{LocRegConfig, DEFAULT_GRID_SIZE, DEFAULT_NEIGHBOR_FRACTION};
use crate::metrics::{self, LabeledScores, DEFAULT_ECE_BINS, DEFAULT_THRESHOLD};
use crate::recalib::{self, Method};

#[derive(Debug, Parser)]
#[command(name = "calibkit", version, about = "Calibration measurement and recalibration for binary classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw synthetic data, optionally with distorted scores.
    Simulate(SimulateArgs),
    /// Score metrics of a score/label file.
    Metrics(MetricsArgs),
    /// Smoothed calibration curve, optionally with a bootstrap band.
    Curve(CurveArgs),
    /// Fit a recalibration map and apply it.
    Recalibrate(RecalibrateArgs),
    /// Random forests on tabular data.
    #[command(subcommand)]
    Rf(RfCommand),
    /// Replication studies.
    #[command(subcommand)]
    Study(StudyCommand),
}

fn positive_number(s: &str) -> std::result::Result<f64, String> {
    let v = parse_number(s).map_err(|e| e.to_string())?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<ForestKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    /// Power distortion p^alpha; fractions such as 1/3 are accepted.
    #[arg(long, value_parser = positive_number, conflicts_with = "gamma")]
    pub alpha: Option<f64>,
    /// Linear-predictor scale sigmoid(gamma * eta).
    #[arg(long, value_parser = positive_number)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_NOISE_SD)]
    pub noise_sd: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ColumnArgs {
    #[arg(long)]
    pub score_col: Option<String>,
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long)]
    pub true_col: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SmootherArgs {
    /// Share of observations in each local neighbourhood.
    #[arg(long, default_value_t = DEFAULT_NEIGHBOR_FRACTION)]
    pub neighbor_fraction: f64,
    /// Evaluation points of the smoothed curve.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
}

impl SmootherArgs {
    fn config(&self, degree: usize) -> Result<LocRegConfig> {
        let c = LocRegConfig { degree, neighbor_fraction: self.neighbor_fraction, grid_size: self.grid_size };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[command(flatten)]
    pub smoother: SmootherArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[command(flatten)]
    pub smoother: SmootherArgs,
    /// Bootstrap resamples for a percentile band.
    #[arg(long, requires = "seed")]
    pub bootstrap: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also draw the curve as SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value_t = svg::DEFAULT_WIDTH)]
    pub width: u32,
    #[arg(long, default_value_t = svg::DEFAULT_HEIGHT)]
    pub height: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct RecalibrateArgs {
    /// platt, isotonic, beta, local0, local1 or local2.
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Calibration data the map is fitted on.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Data to recalibrate; defaults to the calibration data.
    #[arg(long)]
    pub apply: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Fitted map as JSON; defaults to `<out>.params.json`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub columns: ColumnArgs,
    #[command(flatten)]
    pub smoother: SmootherArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TableArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Label column; defaults to `label`, else `d`.
    #[arg(long)]
    pub label: Option<String>,
    /// Comma-separated feature columns; defaults to every column except the
    /// label and the score columns `eta`, `p_true`, `p_u`, `score`, `true_p`.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum RfCommand {
    /// Train one forest and score rows with it.
    Train(RfTrainArgs),
    /// OOB grid search over ntree, mtry and nodesize.
    Grid(RfGridArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct RfTrainArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// classifier or regressor.
    #[arg(long, value_parser = parse_kind)]
    pub kind: ForestKind,
    #[arg(long, default_value_t = 100)]
    pub ntree: usize,
    /// Defaults to floor(sqrt(p)) for classifiers and max(1, p / 3) for regressors.
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Defaults to 1 for classifiers and 5 for regressors.
    #[arg(long)]
    pub nodesize: Option<usize>,
    /// Rows to score, with the same feature columns; defaults to the training rows.
    #[arg(long)]
    pub predict: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RfGridArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long, value_parser = parse_kind)]
    pub kind: ForestKind,
    #[arg(long, value_delimiter = ',')]
    pub ntree: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub mtry: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub nodesize: Option<Vec<usize>>,
    /// Full grid instead of the reduced default.
    #[arg(long)]
    pub paper_scale: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Metrics of distorted and true probabilities across replications.
    Distortion(SyntheticStudyArgs),
    /// Recalibration methods on calibration/test halves across replications.
    Recalibration(SyntheticStudyArgs),
    /// Classifier and regressor forests, recalibrated over repeated splits.
    Rf(RfStudyArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlotArgs {
    /// Skip SVG output.
    #[arg(long)]
    pub no_plots: bool,
    #[arg(long, default_value_t = svg::DEFAULT_WIDTH)]
    pub width: u32,
    #[arg(long, default_value_t = svg::DEFAULT_HEIGHT)]
    pub height: u32,
}

impl PlotArgs {
    fn size(&self) -> svg::Size {
        svg::Size { width: self.width, height: self.height }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SyntheticStudyArgs {
    /// TOML file with study settings; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated scenarios such as alpha:1/3,gamma:3.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// 200 replications unless --replications is given.
    #[arg(long)]
    pub paper_scale: bool,
    #[command(flatten)]
    pub plots: PlotArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RfStudyArgs {
    /// Tabular input; synthetic data is drawn when omitted.
    #[arg(long = "in", conflicts_with = "n")]
    pub input: Option<PathBuf>,
    /// Rows of synthetic data (default 2000).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub splits: Option<usize>,
    /// SMOTE rate in percent applied to the training rows.
    #[arg(long)]
    pub smote: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Full grid and 200 splits unless --splits is given.
    #[arg(long)]
    pub paper_scale: bool,
    #[command(flatten)]
    pub plots: PlotArgs,
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => return clap_exit(e),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = if e.is_validation() { ("validation", 1) } else { ("runtime", 2) };
            eprintln!("error[{class}]: {}", one_line(&e.to_string()));
            ExitCode::from(code)
        }
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn clap_exit(e: clap::Error) -> ExitCode {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            let _ = e.print();
            ExitCode::SUCCESS
        }
        ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = e.print();
            ExitCode::from(1)
        }
        _ => {
            let rendered = e.render().to_string();
            let reason: Vec<&str> = rendered
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error[validation]: {}", reason.join(" ").trim_start_matches("error: "));
            ExitCode::from(1)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Metrics(a) => metrics_cmd(&a),
        Command::Curve(a) => curve(&a),
        Command::Recalibrate(a) => recalibrate(&a),
        Command::Rf(RfCommand::Train(a)) => rf_train(&a),
        Command::Rf(RfCommand::Grid(a)) => rf_grid(&a),
        Command::Study(StudyCommand::Distortion(a)) => synthetic_study(&a, false),
        Command::Study(StudyCommand::Recalibration(a)) => synthetic_study(&a, true),
        Command::Study(StudyCommand::Rf(a)) => rf_study(&a),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let normalized: PathBuf = path.components().collect();
    let mut s = normalized.into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_sidecar<A: Serialize, E: Serialize>(path: &Path, command: &str, args: &A, effective: &E) -> Result<()> {
    let doc = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "arguments": args,
        "effective": effective,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn check_readable(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::input(format!("cannot read input file '{}'", path.display())))
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let config = DgpConfig { noise_sd: a.noise_sd, ..DgpConfig::new(a.n, a.seed) };
    let spec = match (a.alpha, a.gamma) {
        (Some(v), _) => DistortionSpec::alpha(v),
        (_, Some(v)) => DistortionSpec::gamma(v),
        _ => DistortionSpec::identity(),
    };
    let samples = dgp::generate(&config)?;
    let p_u = dgp::distort(&samples, &spec)?;
    let mut wtr = csv::Writer::from_writer(create(&a.out)?);
    wtr.write_record(["x1", "x2", "x3", "x4", "eta", "p_true", "p_u", "d"])?;
    for (s, u) in samples.iter().zip(&p_u) {
        let mut rec: Vec<String> = s.x.iter().map(|v| v.to_string()).collect();
        rec.extend([s.eta.to_string(), s.p_true.to_string(), u.to_string(), s.d.to_string()]);
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    write_sidecar(
        &with_suffix(&a.out, ".config.json"),
        "simulate",
        a,
        &serde_json::json!({ "dgp": config, "distortion": spec }),
    )
}

/// Resolved column names of a score file.
#[derive(Debug, Clone, Serialize)]
struct ScoreColumns {
    score: String,
    label: String,
    true_p: Option<String>,
}

fn pick(header: &[String], explicit: &Option<String>, defaults: &[&str], what: &str) -> Result<Option<usize>> {
    match explicit {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .map(Some)
            .ok_or_else(|| Error::input(format!("{what} column '{name}' not found"))),
        None => Ok(defaults.iter().find_map(|d| header.iter().position(|h| h == d))),
    }
}

fn read_scores(path: &Path, cols: &ColumnArgs) -> Result<(LabeledScores, ScoreColumns)> {
    check_readable(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let si = pick(&header, &cols.score_col, &["score", "p_u"], "score")?
        .ok_or_else(|| Error::input("no score column (expected 'score' or 'p_u', or pass --score-col)"))?;
    let li = pick(&header, &cols.label_col, &["label", "d"], "label")?
        .ok_or_else(|| Error::input("no label column (expected 'label' or 'd', or pass --label-col)"))?;
    let ti = pick(&header, &cols.true_col, &["true_p", "p_true"], "true probability")?;

    let (mut scores, mut labels, mut true_p) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let num = |j: usize| -> Result<f64> {
            let field = rec.get(j).unwrap_or("");
            field.parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("column '{}' value '{field}' is not numeric", header[j]),
            })
        };
        scores.push(num(si)?);
        labels.push(match num(li)? {
            0.0 => 0,
            1.0 => 1,
            v => return Err(Error::Parse { row, message: format!("label {v} is not binary") }),
        });
        if let Some(t) = ti {
            true_p.push(num(t)?);
        }
    }
    let data = LabeledScores::new(scores, labels, ti.map(|_| true_p))?;
    let resolved = ScoreColumns {
        score: header[si].clone(),
        label: header[li].clone(),
        true_p: ti.map(|t| header[t].clone()),
    };
    Ok((data, resolved))
}

fn metrics_cmd(a: &MetricsArgs) -> Result<()> {
    if a.bins == 0 {
        return Err(Error::config("--bins must be at least 1"));
    }
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::config("--threshold must lie in [0, 1]"));
    }
    let (data, columns) = read_scores(&a.input, &a.columns)?;
    let settings = harness::MetricSettings { ece_bins: a.bins, threshold: a.threshold, locreg: a.smoother.config(0)? };
    let list: Vec<Metric> = Metric::ALL
        .into_iter()
        .filter(|m| *m != Metric::Mse || data.true_p().is_some())
        .collect();
    let ev = harness::evaluate(&data, &list, &settings, false);

    let mut rows: Vec<(String, String)> = vec![("n".into(), data.len().to_string())];
    rows.extend(list.iter().zip(&ev.values).map(|(m, v)| (m.name().to_owned(), format_value(*v))));
    let report = metrics::classification_report(&data, a.threshold)?;
    rows.extend([
        ("tp".into(), report.tp.to_string()),
        ("fp".into(), report.fp.to_string()),
        ("tn".into(), report.tn.to_string()),
        ("fn".into(), report.fn_.to_string()),
    ]);

    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut wtr = csv::Writer::from_writer(sink);
    wtr.write_record(["metric", "value"])?;
    for (k, v) in &rows {
        wtr.write_record([k, v])?;
    }
    wtr.flush()?;
    let sidecar = match &a.out {
        Some(p) => with_suffix(p, ".config.json"),
        None => with_suffix(&a.input, ".metrics.config.json"),
    };
    write_sidecar(&sidecar, "metrics", a, &columns)
}

fn curve(a: &CurveArgs) -> Result<()> {
    let (data, columns) = read_scores(&a.input, &a.columns)?;
    let config = a.smoother.config(0)?;
    let fit = crate::locreg::smoothed_calibration_curve(data.scores(), data.labels(), &config)?;
    let grid = fit.eval_points().to_vec();
    let band = match a.bootstrap {
        Some(b) => {
            let seed = a.seed.ok_or_else(|| Error::config("--bootstrap requires --seed"))?;
            Some(metrics::bootstrap_band(&data, |d| metrics::curve_on_grid(d, &grid, &config), b, a.level, seed)?)
        }
        None => None,
    };

    let mut wtr = csv::Writer::from_writer(create(&a.out)?);
    if band.is_some() {
        wtr.write_record(["grid", "estimate", "lo", "hi"])?;
    } else {
        wtr.write_record(["grid", "estimate"])?;
    }
    for (j, (g, v)) in grid.iter().zip(fit.eval_values()).enumerate() {
        let mut rec = vec![format_value(*g), format_value(*v)];
        if let Some(band) = &band {
            rec.push(format_value(band[j].lo));
            rec.push(format_value(band[j].hi));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;

    if let Some(path) = &a.svg {
        let (lo, hi) = match &band {
            Some(b) => (b.iter().map(|i| i.lo).collect(), b.iter().map(|i| i.hi).collect()),
            None => (fit.eval_values().to_vec(), fit.eval_values().to_vec()),
        };
        let label = a.input.file_name().map_or("curve".into(), |n| n.to_string_lossy().into_owned());
        let cb = CurveBand {
            scenario: label.clone(),
            method: columns.score.clone(),
            split: SplitRole::All,
            grid: grid.clone(),
            mean: fit.eval_values().to_vec(),
            lo,
            hi,
            count: vec![1; grid.len()],
        };
        let size = svg::Size { width: a.width, height: a.height };
        fs::write(path, svg::curve_bands(&format!("Calibration curve: {label}"), &[(columns.score.clone(), &cb)], size))?;
    }
    write_sidecar(
        &with_suffix(&a.out, ".config.json"),
        "curve",
        a,
        &serde_json::json!({ "columns": columns, "locreg": config }),
    )
}

fn recalibrate(a: &RecalibrateArgs) -> Result<()> {
    let (cal, columns) = read_scores(&a.input, &a.columns)?;
    let config = a.smoother.config(0)?;
    let fitted = recalib::fit(a.method, &cal, &config)?;
    for w in &fitted.warnings {
        eprintln!("warning: {w}");
    }
    let target = match &a.apply {
        Some(p) => read_scores(p, &a.columns)?.0,
        None => cal,
    };
    let recalibrated = fitted.apply(target.scores())?;

    let mut wtr = csv::Writer::from_writer(create(&a.out)?);
    wtr.write_record(["score", "recalibrated", "label"])?;
    for ((s, r), l) in target.scores().iter().zip(&recalibrated).zip(target.labels()) {
        wtr.write_record([format_value(*s), format_value(*r), l.to_string()])?;
    }
    wtr.flush()?;

    let params = a.params.clone().unwrap_or_else(|| with_suffix(&a.out, ".params.json"));
    let text = serde_json::to_string_pretty(&fitted).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(&params, text + "\n")?;
    write_sidecar(
        &with_suffix(&a.out, ".config.json"),
        "recalibrate",
        a,
        &serde_json::json!({ "columns": columns, "locreg": config, "params": params }),
    )
}

const NON_FEATURES: [&str; 5] = ["eta", "p_true", "p_u", "score", "true_p"];

fn load_features(path: &Path, label: &Option<String>, features: &Option<Vec<String>>) -> Result<TabularDataset> {
    check_readable(path)?;
    let label = match label {
        Some(l) => l.clone(),
        None => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
            let header = rdr.headers()?;
            ["label", "d"]
                .into_iter()
                .find(|c| header.iter().any(|h| h == *c))
                .ok_or_else(|| Error::input("no label column (expected 'label' or 'd', or pass --label)"))?
                .to_owned()
        }
    };
    let ds = data::load_table(path, &label)?;
    let names: Vec<String> = match features {
        Some(f) => f.clone(),
        None => ds
            .feature_names()
            .iter()
            .filter(|n| !NON_FEATURES.contains(&n.as_str()))
            .cloned()
            .collect(),
    };
    ds.select_features(&names)
}

fn rf_train(a: &RfTrainArgs) -> Result<()> {
    let train = load_features(&a.table.input, &a.table.label, &a.table.features)?;
    let p = train.n_features();
    let config = ForestConfig {
        kind: a.kind,
        ntree: a.ntree,
        mtry: a.mtry.unwrap_or(match a.kind {
            ForestKind::Classifier => ((p as f64).sqrt().floor() as usize).max(1),
            ForestKind::Regressor => (p / 3).max(1),
        }),
        nodesize: a.nodesize.unwrap_or(match a.kind {
            ForestKind::Classifier => 1,
            ForestKind::Regressor => 5,
        }),
        seed: a.seed,
    };
    let forest = forest::train(&train, &config)?;
    for w in forest.warnings() {
        eprintln!("warning: {w}");
    }
    let oob = forest::oob_criterion(&forest, &train)?;
    let target = match &a.predict {
        Some(path) => load_features(path, &a.table.label, &Some(train.feature_names().to_vec()))?,
        None => train.clone(),
    };
    let scores = forest.predict_dataset(&target)?;
    let mut wtr = csv::Writer::from_writer(create(&a.out)?);
    wtr.write_record(["score", "label"])?;
    for (s, l) in scores.iter().zip(target.labels()) {
        wtr.write_record([format_value(*s), l.to_string()])?;
    }
    wtr.flush()?;
    write_sidecar(
        &with_suffix(&a.out, ".config.json"),
        "rf train",
        a,
        &serde_json::json!({ "forest": config, "features": train.feature_names(), "oob": oob }),
    )
}

fn rf_grid(a: &RfGridArgs) -> Result<()> {
    let train = load_features(&a.table.input, &a.table.label, &a.table.features)?;
    let p = train.n_features();
    let base = if a.paper_scale {
        RfStudyConfig { seed: a.seed, ..RfStudyConfig::default() }.paper_scale(p)
    } else {
        RfStudyConfig { seed: a.seed, ..RfStudyConfig::default() }
    };
    let ntree = a.ntree.clone().unwrap_or(base.ntree);
    let mtry = a.mtry.clone().unwrap_or(base.mtry);
    let nodesize = a.nodesize.clone().unwrap_or(base.nodesize);
    let grid = forest::build_grid(a.kind, &ntree, &mtry, &nodesize, p, a.seed);
    let result = forest::grid_search(&train, &grid)?;

    let mut wtr = csv::Writer::from_writer(create(&a.out)?);
    wtr.write_record(["ntree", "mtry", "nodesize", "criterion", "selected"])?;
    for (i, e) in result.entries.iter().enumerate() {
        wtr.write_record([
            e.config.ntree.to_string(),
            e.config.mtry.to_string(),
            e.config.nodesize.to_string(),
            format_value(e.oob.criterion),
            u8::from(i == result.best).to_string(),
        ])?;
    }
    wtr.flush()?;
    write_sidecar(
        &with_suffix(&a.out, ".config.json"),
        "rf grid",
        a,
        &serde_json::json!({ "grid": grid, "features": train.feature_names(), "best": result.best_config() }),
    )
}

fn file_tag(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

fn write_table_file(dir: &Path, name: &str, table: &StudyTable) -> Result<()> {
    table.write_csv(create(&dir.join(name))?)
}

fn write_summary_file(dir: &Path, name: &str, table: &StudyTable) -> Result<()> {
    harness::write_summary_csv(&table.summarize(), create(&dir.join(name))?)
}

fn write_svg(dir: &Path, name: &str, content: String) -> Result<()> {
    fs::write(dir.join(name), content)?;
    Ok(())
}

fn synthetic_study(a: &SyntheticStudyArgs, recalibration: bool) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => {
            check_readable(p)?;
            StudyConfig::load(p)?
        }
        None => StudyConfig::default(),
    };
    config.seed = a.seed;
    if a.paper_scale {
        config.replications = PAPER_REPLICATIONS;
    }
    if let Some(r) = a.replications {
        config.replications = r;
    }
    if let Some(n) = a.n {
        config.n = n;
    }
    if let Some(s) = &a.scenarios {
        config.scenarios = s.clone();
    }
    if let Some(m) = &a.methods {
        config.methods = m.clone();
    }
    if let Some(m) = &a.metrics {
        config.metrics = m.clone();
    }
    if let Some(b) = a.bootstrap {
        config.bootstrap = b;
    }
    config.validate()?;

    let out = if recalibration {
        harness::run_recalibration_study(&config)?
    } else {
        harness::run_distortion_study(&config)?
    };
    fs::create_dir_all(&a.out)?;
    let dir = a.out.as_path();
    write_table_file(dir, "study.csv", &out.table)?;
    write_summary_file(dir, "summary.csv", &out.table)?;
    harness::write_curves_csv(&out.curves, create(&dir.join("curves.csv"))?)?;
    let deltas = recalibration.then(|| out.table.deltas(UNCALIBRATED));
    if let Some(d) = &deltas {
        write_table_file(dir, "deltas.csv", d)?;
        write_summary_file(dir, "delta_summary.csv", d)?;
    }

    if !a.plots.no_plots {
        let size = a.plots.size();
        let scenarios = config.scenario_list()?;
        let metric_list = config.metric_list()?;
        match &deltas {
            None => {
                for m in &metric_list {
                    let mut groups = vec![svg::BoxGroup {
                        label: P_TRUE.into(),
                        values: out.table.values(&scenarios[0].label, P_TRUE, SplitRole::All, m.name()),
                    }];
                    groups.extend(scenarios.iter().map(|s| svg::BoxGroup {
                        label: s.label.clone(),
                        values: out.table.values(&s.label, P_U, SplitRole::All, m.name()),
                    }));
                    write_svg(dir, &format!("box_{}.svg", m.name()), svg::boxplot(m.name(), m.name(), &groups, size))?;
                }
            }
            Some(d) => {
                let methods = config.method_list()?;
                for s in &scenarios {
                    for m in &metric_list {
                        let groups: Vec<svg::BoxGroup> = methods
                            .iter()
                            .flat_map(|method| {
                                [SplitRole::Calibration, SplitRole::Test].map(|split| svg::BoxGroup {
                                    label: format!("{method} ({split})"),
                                    values: d.values(&s.label, method.name(), split, m.name()),
                                })
                            })
                            .collect();
                        let title = format!("{}: change in {} after recalibration", s.label, m.name());
                        let name = format!("delta_{}_{}.svg", file_tag(&s.label), m.name());
                        write_svg(dir, &name, svg::boxplot(&title, &format!("delta {}", m.name()), &groups, size))?;
                    }
                }
            }
        }
        for s in &scenarios {
            let bands: Vec<(String, &CurveBand)> =
                out.curves.iter().filter(|b| b.scenario == s.label).map(|b| (b.method.clone(), b)).collect();
            let name = format!("curve_{}.svg", file_tag(&s.label));
            write_svg(dir, &name, svg::curve_bands(&format!("Calibration curves: {}", s.label), &bands, size))?;
        }
    }

    let command = if recalibration { "study recalibration" } else { "study distortion" };
    write_sidecar(&with_suffix(&a.out, ".config.json"), command, a, &config)
}

fn rf_study(a: &RfStudyArgs) -> Result<()> {
    let dataset = match &a.input {
        Some(path) => load_features(path, &a.label, &a.features)?,
        None => {
            let n = a.n.unwrap_or(2000);
            let samples = dgp::generate(&DgpConfig::new(n, harness::stream_seed(a.seed, 0)))?;
            let names = (1..=4).map(|i| format!("x{i}")).collect();
            TabularDataset::new(
                names,
                "d".into(),
                samples.iter().map(|s| s.x.to_vec()).collect(),
                samples.iter().map(|s| s.d).collect(),
            )?
        }
    };
    let mut config = match &a.config {
        Some(p) => {
            check_readable(p)?;
            RfStudyConfig::load(p)?
        }
        None => RfStudyConfig::default(),
    };
    config.seed = a.seed;
    if a.paper_scale {
        config = config.paper_scale(dataset.n_features());
    }
    if let Some(s) = a.splits {
        config.splits = s;
    }
    if let Some(r) = a.smote {
        config.smote_rate = r;
    }
    if let Some(m) = &a.methods {
        config.methods = m.clone();
    }
    config.validate()?;

    let out = harness::run_rf_study(&dataset, &config)?;
    fs::create_dir_all(&a.out)?;
    let dir = a.out.as_path();
    let deltas = out.table.deltas(UNCALIBRATED);
    write_table_file(dir, "study.csv", &out.table)?;
    write_summary_file(dir, "summary.csv", &out.table)?;
    write_table_file(dir, "deltas.csv", &deltas)?;
    write_summary_file(dir, "delta_summary.csv", &deltas)?;
    write_table_file(dir, "trace.csv", &out.trace)?;
    harness::write_grid_csv(&out.grids, create(&dir.join("grid.csv"))?)?;
    harness::write_curves_csv(&out.curves, create(&dir.join("curves.csv"))?)?;

    if !a.plots.no_plots {
        let size = a.plots.size();
        let mut labels = vec![UNCALIBRATED.to_owned()];
        labels.extend(config.method_list()?.iter().map(|m| m.name().to_owned()));
        let table = &out.table;
        for m in config.metric_list()? {
            let mut groups = Vec::new();
            for k in harness::RF_KINDS {
                for method in &labels {
                    groups.push(svg::BoxGroup {
                        label: format!("{k} {method}"),
                        values: table.values(k.name(), method, SplitRole::Test, m.name()),
                    });
                }
            }
            let title = format!("Random forest scores: test-set {}", m.name());
            write_svg(dir, &format!("box_{}.svg", m.name()), svg::boxplot(&title, m.name(), &groups, size))?;
        }
        for k in harness::RF_KINDS {
            let bands: Vec<(String, &CurveBand)> =
                out.curves.iter().filter(|b| b.scenario == k.name()).map(|b| (b.method.clone(), b)).collect();
            let title = format!("Calibration curves: {k} forest");
            write_svg(dir, &format!("curve_{}.svg", k.name()), svg::curve_bands(&title, &bands, size))?;
        }
    }

    let selected: Vec<_> = out.grids.iter().map(|(k, g)| (k.name(), *g.best_config())).collect();
    write_sidecar(
        &with_suffix(&a.out, ".config.json"),
        "study rf",
        a,
        &serde_json::json!({
            "study": config,
            "features": dataset.feature_names(),
            "rows": dataset.n_rows(),
            "selected": selected,
        }),
    )
}
