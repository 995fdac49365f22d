//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line to
//! standard error (bypassing the test harness capture) and the test fails if
//! any criterion fails.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use calibkit::data::TabularDataset;
use calibkit::dgp::{self, DgpConfig};
use calibkit::harness::{
    self, RfStudyConfig, SplitRole, StudyConfig, StudyTable, P_TRUE, P_U, UNCALIBRATED,
};
use calibkit::locreg::{self, LocRegConfig};
use calibkit::metrics::{self, LabeledScores};
use calibkit::recalib::{self, Method};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn report(id: usize, name: &str, o: &Outcome) {
    let status = if o.pass { "PASS" } else { "FAIL" };
    let line = format!("[{status}] criterion {id:>2}: {name}: {}\n", o.detail);
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn synthetic_config(scenarios: &[&str], replications: usize, seed: u64) -> StudyConfig {
    StudyConfig {
        scenarios: scenarios.iter().map(|s| s.to_string()).collect(),
        n: 2000,
        replications,
        seed,
        bootstrap: 20,
        ..StudyConfig::default()
    }
}

fn baseline_table() -> (StudyTable, f64) {
    let start = Instant::now();
    let out = harness::run_distortion_study(&synthetic_config(&["alpha:1", "gamma:1"], 50, 2024)).unwrap();
    (out.table, start.elapsed().as_secs_f64())
}

fn criterion_1(table: &StudyTable, secs: f64) -> Outcome {
    let mut ok = secs < 60.0;
    let mut parts = Vec::new();
    for s in ["alpha:1", "gamma:1"] {
        let lcs = mean(&table.values(s, P_U, SplitRole::All, "lcs"));
        let mse = table.values(s, P_U, SplitRole::All, "mse");
        let all_zero = mse.iter().all(|&v| v == 0.0);
        ok &= lcs < 0.005 && all_zero && mse.len() == 50;
        parts.push(format!("{s}: mean LCS {lcs:.5}, true MSE exactly 0 in {}/50", mse.iter().filter(|&&v| v == 0.0).count()));
    }
    outcome(ok, format!("{}; {secs:.1}s", parts.join("; ")))
}

fn criterion_2(table: &StudyTable) -> Outcome {
    let brier = mean(&table.values("alpha:1", P_TRUE, SplitRole::All, "brier"));
    outcome((0.20..=0.26).contains(&brier), format!("mean Brier of p_true {brier:.4} (target [0.20, 0.26])"))
}

fn criterion_3() -> Outcome {
    let cfg = StudyConfig {
        metrics: vec!["auc".into()],
        ..synthetic_config(&["alpha:1/3", "alpha:3", "gamma:1/3", "gamma:3"], 50, 77)
    };
    let table = harness::run_distortion_study(&cfg).unwrap().table;
    let mut compared = 0;
    let mut mismatched = 0;
    for s in &cfg.scenarios {
        let truth = table.values(s, P_TRUE, SplitRole::All, "auc");
        let distorted = table.values(s, P_U, SplitRole::All, "auc");
        for (a, b) in truth.iter().zip(&distorted) {
            compared += 1;
            if a.to_bits() != b.to_bits() || a.is_nan() {
                mismatched += 1;
            }
        }
    }
    outcome(
        compared == 200 && mismatched == 0,
        format!("{compared} replication/scenario pairs, {mismatched} with AUC(p_u) != AUC(p_true) bitwise"),
    )
}

fn criterion_4(table: &StudyTable) -> Outcome {
    let ece = mean(&table.values("alpha:1", P_U, SplitRole::All, "ece"));
    let lcs = mean(&table.values("alpha:1", P_U, SplitRole::All, "lcs"));
    outcome(ece > 10.0 * lcs, format!("mean ECE {ece:.4} vs mean LCS {lcs:.5} (ratio {:.1}, need > 10)", ece / lcs))
}

fn criterion_5() -> Outcome {
    let cfg = synthetic_config(&["gamma:3"], 50, 555);
    let table = harness::run_recalibration_study(&cfg).unwrap().table;
    let deltas = table.deltas(UNCALIBRATED);
    let mut ok = true;
    let mut worst_lcs = f64::NEG_INFINITY;
    let mut worst_mse = f64::NEG_INFINITY;
    for m in Method::ALL {
        let d_lcs = median(&deltas.values("gamma:3", m.name(), SplitRole::Test, "lcs"));
        let d_mse = median(&deltas.values("gamma:3", m.name(), SplitRole::Test, "mse"));
        ok &= d_lcs < 0.0 && d_mse < 0.0;
        worst_lcs = worst_lcs.max(d_lcs);
        worst_mse = worst_mse.max(d_mse);
    }
    let gap = |method: &str| {
        let cal = table.values("gamma:3", method, SplitRole::Calibration, "auc");
        let test = table.values("gamma:3", method, SplitRole::Test, "auc");
        mean(&cal.iter().zip(&test).map(|(c, t)| c - t).collect::<Vec<_>>())
    };
    let iso_gap = gap("isotonic");
    let (other, other_gap) = Method::ALL
        .iter()
        .filter(|m| **m != Method::Isotonic)
        .map(|m| (m.name(), gap(m.name())))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    ok &= iso_gap > other_gap;
    outcome(
        ok,
        format!(
            "largest median test dLCS {worst_lcs:.5}, dMSE {worst_mse:.5}; calibration-minus-test AUC gap isotonic {iso_gap:.4} vs next {other} {other_gap:.4}"
        ),
    )
}

/// Monotone least squares by the max-min formula
/// `f_i = max_{j <= i} min_{k >= i} mean(y[j..=k])`.
fn isotonic_oracle(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            (0..=i)
                .map(|j| (i..n).map(|k| mean(&y[j..=k])).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for len in 1..=8usize {
        for bits in 0u32..(1 << len) {
            let y: Vec<f64> = (0..len).map(|i| f64::from((bits >> i) & 1)).collect();
            let expected = isotonic_oracle(&y);
            let direct = recalib::pava_unweighted(&y);
            worst = expected.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);

            // Same labels presented in reverse row order, fitted through the
            // recalibrator on distinct increasing scores.
            let scores: Vec<f64> = (0..len).map(|i| (i as f64 + 1.0) / (len as f64 + 1.0)).collect();
            let labels: Vec<u8> = y.iter().map(|&v| v as u8).collect();
            let rev_scores: Vec<f64> = scores.iter().rev().copied().collect();
            let rev_labels: Vec<u8> = labels.iter().rev().copied().collect();
            let data = LabeledScores::new(rev_scores, rev_labels, None).unwrap();
            let fitted = recalib::fit_isotonic(&data).unwrap().apply(&scores).unwrap();
            worst = expected.iter().zip(&fitted).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
            checked += 1;
        }
    }
    outcome(worst <= 1e-12 && checked == 510, format!("{checked} label sequences, max deviation {worst:.1e}"))
}

fn kernel_mean_oracle(x: &[f64], y: &[f64], at: f64, frac: f64) -> f64 {
    let n = x.len();
    let k = ((frac * n as f64).ceil() as usize).clamp(1, n);
    let mut d: Vec<f64> = x.iter().map(|v| (v - at).abs()).collect();
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    let h = sorted[k - 1];
    let mut w: Vec<f64> = d
        .iter()
        .map(|&di| {
            if h > 0.0 && di < h {
                let u = di / h;
                (1.0 - u.powi(3)).powi(3)
            } else {
                0.0
            }
        })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w = d.iter_mut().map(|di| if *di <= h { 1.0 } else { 0.0 }).collect();
    }
    let num: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
    num / w.iter().sum::<f64>()
}

fn criterion_7() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7007);
    let mut worst0: f64 = 0.0;
    let mut worst1: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(5..200);
        let frac = rng.random_range(0.1..1.0);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.4))).collect();
        let cfg = LocRegConfig { degree: 0, neighbor_fraction: frac, grid_size: 41 };
        let fit = locreg::fit(&x, &y, &cfg).unwrap();
        for (&at, &v) in fit.eval_points().iter().zip(fit.eval_values()) {
            worst0 = worst0.max((v - kernel_mean_oracle(&x, &y, at, frac)).abs());
        }

        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
        let lin: Vec<f64> = x.iter().map(|v| a + b * v).collect();
        let fit1 = locreg::fit(&x, &lin, &LocRegConfig { degree: 1, ..cfg }).unwrap();
        for (&at, &v) in fit1.eval_points().iter().zip(fit1.eval_values()) {
            worst1 = worst1.max((v - (a + b * at)).abs());
        }
    }
    outcome(
        worst0 <= 1e-12 && worst1 <= 1e-10,
        format!("50 fixtures: degree-0 max deviation {worst0:.1e}, degree-1 linear max deviation {worst1:.1e}"),
    )
}

fn criterion_8() -> Outcome {
    let sizes = [500usize, 2000, 8000];
    let mut medians = Vec::new();
    for &n in &sizes {
        let lcs: Vec<f64> = (0..20)
            .map(|r| {
                // Negligible noise makes the logistic model in x exactly right.
                let cfg = DgpConfig { noise_sd: 1e-9, ..DgpConfig::new(n, 8000 + r) };
                let samples = dgp::generate(&cfg).unwrap();
                let columns: Vec<Vec<f64>> = (0..4).map(|j| samples.iter().map(|s| s.x[j]).collect()).collect();
                let labels: Vec<u8> = samples.iter().map(|s| s.d).collect();
                let fit = recalib::fit_logistic(&columns, &labels).unwrap();
                let scores = samples.iter().map(|s| fit.predict_proba(&s.x)).collect();
                let data = LabeledScores::new(scores, labels, None).unwrap();
                metrics::lcs(&data, &LocRegConfig::default()).unwrap()
            })
            .collect();
        medians.push(median(&lcs));
    }
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        monotone && medians[2] < 0.01,
        format!("median LCS at n=500/2000/8000: {:.5} / {:.5} / {:.5}", medians[0], medians[1], medians[2]),
    )
}

fn dgp_dataset(n: usize, seed: u64) -> TabularDataset {
    let samples = dgp::generate(&DgpConfig::new(n, seed)).unwrap();
    TabularDataset::new(
        (1..=4).map(|i| format!("x{i}")).collect(),
        "d".into(),
        samples.iter().map(|s| s.x.to_vec()).collect(),
        samples.iter().map(|s| s.d).collect(),
    )
    .unwrap()
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let ds = dgp_dataset(2000, 909);
    let cfg = RfStudyConfig { seed: 909, splits: 20, bootstrap: 20, ..RfStudyConfig::default() };
    let out = harness::run_rf_study(&ds, &cfg).unwrap();
    let reg = median(&out.table.values("regressor", UNCALIBRATED, SplitRole::Test, "lcs"));
    let cls = median(&out.table.values("classifier", UNCALIBRATED, SplitRole::Test, "lcs"));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        reg <= cls && secs < 300.0,
        format!("median test LCS regressor {reg:.5} vs classifier {cls:.5}; {secs:.1}s"),
    )
}

fn pair_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn criterion_10() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1010);
    let mut mismatches = 0;
    let mut fixtures = 0;
    while fixtures < 100 {
        let n = rng.random_range(2..60);
        let levels = rng.random_range(2..8);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            continue;
        }
        fixtures += 1;
        let data = LabeledScores::new(scores.clone(), labels.clone(), None).unwrap();
        if metrics::auc(&data).unwrap() != pair_auc(&scores, &labels) {
            mismatches += 1;
        }
    }

    // Threshold 0.5, predictions >= 0.5 are positive:
    // (0.9,1) TP, (0.6,1) TP, (0.5,0) FP, (0.4,1) FN, (0.2,0) TN, (0.1,0) TN.
    let data = LabeledScores::new(vec![0.9, 0.6, 0.5, 0.4, 0.2, 0.1], vec![1, 1, 0, 1, 0, 0], None).unwrap();
    let r = metrics::classification_report(&data, 0.5).unwrap();
    let confusion_ok = (r.tp, r.fp, r.tn, r.fn_) == (2, 1, 2, 1)
        && r.accuracy == 4.0 / 6.0
        && r.sensitivity == 2.0 / 3.0
        && r.specificity == 2.0 / 3.0;
    // Perfect separation at the threshold.
    let all_pos = LabeledScores::new(vec![0.7, 0.8, 0.2], vec![1, 1, 0], None).unwrap();
    let r2 = metrics::classification_report(&all_pos, 0.5).unwrap();
    let confusion_ok = confusion_ok && (r2.tp, r2.fp, r2.tn, r2.fn_) == (2, 0, 1, 0) && r2.accuracy == 1.0;

    outcome(
        mismatches == 0 && confusion_ok,
        format!("{fixtures} tied fixtures, {mismatches} AUC mismatches; confusion fixtures {}", if confusion_ok { "match" } else { "differ" }),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_calibkit"))
        .args(args)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn directory_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let studies: [(&str, Vec<&str>); 3] = [
        ("distortion", vec!["--replications", "4", "--n", "400", "--bootstrap", "20"]),
        ("recalibration", vec!["--replications", "3", "--n", "400", "--bootstrap", "20"]),
        ("rf", vec!["--n", "400", "--splits", "3"]),
    ];
    let mut ok = true;
    let mut compared = 0;
    for (name, extra) in &studies {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let dir = tmp.path().join(format!("{name}_{run}"));
            let dir_s = dir.to_string_lossy().into_owned();
            let mut args = vec!["study", name, "--seed", "31", "--out", &dir_s];
            args.extend(extra.iter().copied());
            ok &= run_cli(&args);
            let mut files = directory_bytes(&dir);
            let sidecar = std::fs::read_to_string(tmp.path().join(format!("{name}_{run}.config.json"))).unwrap();
            files.push(("config".into(), sidecar.replace(&dir_s, "<out>").into_bytes()));
            outputs.push(files);
        }
        ok &= !outputs[0].is_empty() && outputs[0] == outputs[1];
        compared += outputs[0].len();
    }
    outcome(ok, format!("3 study commands run twice with seed 31; {compared} files per run (CSV, SVG, sidecar) compared byte for byte"))
}

#[test]
fn acceptance_criteria() {
    let (baseline, secs) = baseline_table();
    let results = [
        ("well-calibrated baseline", criterion_1(&baseline, secs)),
        ("Brier floor of true probabilities", criterion_2(&baseline)),
        ("AUC invariance under monotone distortion", criterion_3()),
        ("ECE exceeds LCS when calibrated", criterion_4(&baseline)),
        ("recalibration improves calibration at gamma=3", criterion_5()),
        ("PAVA matches exhaustive monotone least squares", criterion_6()),
        ("local regression oracles", criterion_7()),
        ("logistic regression becomes calibrated with n", criterion_8()),
        ("regressor forest calibrates better than classifier", criterion_9()),
        ("AUC and confusion-matrix oracles", criterion_10()),
        ("study determinism", criterion_11()),
    ];
    let _ = std::io::stderr().write_all(b"\n");
    for (i, (name, o)) in results.iter().enumerate() {
        report(i + 1, name, o);
    }
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, (_, o))| !o.pass).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
