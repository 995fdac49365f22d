//! Calibration metrics (Brier score, true MSE, ECE, Local Calibration Score),
//! discrimination metrics (confusion rates, AUC), binned reliability
//! curves and percentile bootstrap bands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::locreg::{self, LocRegConfig, LocalFit};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_ECE_BINS: usize = 10;

/// Scores, binary outcomes and (for synthetic data) the true event
/// probabilities, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<u8>,
    true_p: Option<Vec<f64>>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, true_p: Option<Vec<f64>>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::input("no observations"));
        }
        if scores.len() != labels.len() {
            return Err(Error::input(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some((i, s)) = scores.iter().enumerate().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
            return Err(Error::input(format!("score {s} at row {i} outside [0, 1]")));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(Error::input(format!("label {l} at row {i} is not binary")));
        }
        if let Some(p) = &true_p {
            if p.len() != scores.len() {
                return Err(Error::input("true probabilities and scores differ in length"));
            }
            if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(Error::input(format!("true probability {v} at row {i} outside [0, 1]")));
            }
        }
        Ok(Self { scores, labels, true_p })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn true_p(&self) -> Option<&[f64]> {
        self.true_p.as_deref()
    }

    /// Same labels and truth with replacement scores.
    pub fn with_scores(&self, scores: Vec<f64>) -> Result<Self> {
        Self::new(scores, self.labels.clone(), self.true_p.clone())
    }

    /// Rows at `indices`, in that order; repeats allowed.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            scores: indices.iter().map(|&i| self.scores[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            true_p: self.true_p.as_ref().map(|p| indices.iter().map(|&i| p[i]).collect()),
        }
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    fn require_both_classes(&self) -> Result<()> {
        match self.positives() {
            0 => Err(Error::SingleClass(0)),
            p if p == self.len() => Err(Error::SingleClass(1)),
            _ => Ok(()),
        }
    }
}

pub fn brier(data: &LabeledScores) -> f64 {
    let sum: f64 = data
        .scores
        .iter()
        .zip(&data.labels)
        .map(|(s, &d)| (s - f64::from(d)).powi(2))
        .sum();
    sum / data.len() as f64
}

/// Mean squared distance between `candidate` and the true probabilities.
pub fn true_mse(data: &LabeledScores, candidate: &[f64]) -> Result<f64> {
    let truth = data
        .true_p()
        .ok_or_else(|| Error::input("true probabilities are not available"))?;
    if candidate.len() != truth.len() {
        return Err(Error::input("candidate scores and true probabilities differ in length"));
    }
    let sum: f64 = truth.iter().zip(candidate).map(|(p, c)| (p - c).powi(2)).sum();
    Ok(sum / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub index: usize,
    pub count: usize,
    pub mean_score: f64,
    pub mean_outcome: f64,
    /// Fraction of rows whose thresholded class equals the label.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedCurve {
    pub requested_bins: usize,
    pub threshold: f64,
    pub bins: Vec<Bin>,
}

impl BinnedCurve {
    /// Bins actually produced after merging duplicate quantile edges.
    pub fn effective_bins(&self) -> usize {
        self.bins.len()
    }
}

/// Assigns rows to at most `bins` quantile bins of the scores. Rows sharing
/// a score always share a bin, so duplicate edges merge and the number of
/// returned groups may be smaller than requested. Every group is non-empty
/// and groups are ordered by score.
pub fn quantile_bins(scores: &[f64], bins: usize) -> Result<Vec<Vec<usize>>> {
    let n = scores.len();
    if bins == 0 {
        return Err(Error::config("number of bins must be at least 1"));
    }
    if bins > n {
        return Err(Error::config(format!("{bins} bins requested for {n} observations")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut edges: Vec<f64> = (1..bins).map(|b| scores[order[b * n / bins]]).collect();
    edges.dedup();
    let min = scores[order[0]];
    edges.retain(|&e| e > min);

    let mut groups = vec![Vec::new(); edges.len() + 1];
    for &i in &order {
        let b = edges.partition_point(|&e| e <= scores[i]);
        groups[b].push(i);
    }
    Ok(groups)
}

fn binned_curve(data: &LabeledScores, bins: usize, threshold: f64) -> Result<BinnedCurve> {
    let groups = quantile_bins(&data.scores, bins)?;
    let bins_out = groups
        .iter()
        .enumerate()
        .map(|(index, rows)| {
            let nb = rows.len() as f64;
            let (mut s, mut d, mut correct) = (0.0, 0.0, 0.0);
            for &i in rows {
                let score = data.scores[i];
                let label = data.labels[i];
                s += score;
                d += f64::from(label);
                if u8::from(score >= threshold) == label {
                    correct += 1.0;
                }
            }
            Bin {
                index,
                count: rows.len(),
                mean_score: s / nb,
                mean_outcome: d / nb,
                accuracy: correct / nb,
            }
        })
        .collect();
    Ok(BinnedCurve { requested_bins: bins, threshold, bins: bins_out })
}

/// Reliability diagram over quantile bins of the scores.
pub fn quantile_calibration_curve(data: &LabeledScores, bins: usize) -> Result<BinnedCurve> {
    binned_curve(data, bins, DEFAULT_THRESHOLD)
}

/// Expected calibration error: bin-weighted `|acc(b) - conf(b)|` where
/// `acc(b)` is the share of correct class predictions at `threshold`.
pub fn ece(data: &LabeledScores, bins: usize, threshold: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config(format!("threshold {threshold} outside [0, 1]")));
    }
    let curve = binned_curve(data, bins, threshold)?;
    let n = data.len() as f64;
    Ok(curve
        .bins
        .iter()
        .map(|b| b.count as f64 / n * (b.accuracy - b.mean_score).abs())
        .sum())
}

/// Share of observed scores whose nearest grid point is each evaluation
/// point of `curve`. Sums to one.
pub fn density_weights(grid: &[f64], scores: &[f64]) -> Vec<f64> {
    let mut counts = vec![0usize; grid.len()];
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let last = grid.len() - 1;
    for &s in scores {
        let idx = if hi > lo {
            let pos = (s - lo) / (hi - lo) * last as f64;
            (pos.round().max(0.0) as usize).min(last)
        } else {
            0
        };
        counts[idx] += 1;
    }
    let n = scores.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Weighted squared deviation of a curve from the bisector.
pub fn bisector_deviation(grid: &[f64], values: &[f64], weights: &[f64]) -> f64 {
    grid.iter()
        .zip(values)
        .zip(weights)
        .map(|((l, g), w)| w * (g - l).powi(2))
        .sum()
}

/// Local Calibration Score: the degree-0 smoothed calibration curve's
/// squared distance from the bisector, weighted by where the scores fall.
pub fn lcs(data: &LabeledScores, config: &LocRegConfig) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::input("LCS needs at least two observations"));
    }
    let curve = locreg::smoothed_calibration_curve(&data.scores, &data.labels, config)?;
    Ok(lcs_from_curve(&curve, &data.scores))
}

pub fn lcs_from_curve(curve: &LocalFit, scores: &[f64]) -> f64 {
    let weights = density_weights(curve.eval_points(), scores);
    bisector_deviation(curve.eval_points(), curve.eval_values(), &weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    /// NaN when there are no positives.
    pub sensitivity: f64,
    /// NaN when there are no negatives.
    pub specificity: f64,
}

pub fn classification_report(data: &LabeledScores, threshold: f64) -> Result<ClassificationReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::config(format!("threshold {threshold} outside [0, 1]")));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &d) in data.scores.iter().zip(&data.labels) {
        match (s >= threshold, d == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { f64::NAN } else { num as f64 / den as f64 };
    Ok(ClassificationReport {
        threshold,
        tp,
        fp,
        tn,
        fn_,
        accuracy: ratio(tp + tn, data.len()),
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
    })
}

/// Area under the ROC curve as the Mann-Whitney statistic with midranks
/// for ties. Integer arithmetic keeps the result exact.
pub fn auc(data: &LabeledScores) -> Result<f64> {
    data.require_both_classes()?;
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.scores[a].total_cmp(&data.scores[b]));

    // Twice the rank sum of the positives; a tie group at sorted positions
    // [start, end) shares midrank (start + 1 + end) / 2.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && data.scores[order[end]] == data.scores[order[start]] {
            end += 1;
        }
        let pos = order[start..end].iter().filter(|&&i| data.labels[i] == 1).count() as u128;
        twice_rank_sum += pos * (start as u128 + 1 + end as u128);
        start = end;
    }
    let n_pos = data.positives() as u128;
    let n_neg = n as u128 - n_pos;
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Lower and upper percentile bounds at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation sample quantile (type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over `n_rows` resampled with replacement. The
/// estimator sees the resampled row indices and must return the same number
/// of values every time; NaN replicates are left out of the percentiles at
/// their position. Resample `b` uses its own generator seeded from
/// `seed` and `b`, so the result does not depend on scheduling.
pub fn bootstrap_rows<F>(n_rows: usize, estimator: F, n_boot: usize, level: f64, seed: u64) -> Result<Vec<Interval>>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    if n_boot < 2 {
        return Err(Error::config(format!("at least 2 bootstrap resamples required, got {n_boot}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if n_rows == 0 {
        return Err(Error::input("nothing to resample"));
    }
    let replicates = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let idx: Vec<usize> = (0..n_rows).map(|_| rng.random_range(0..n_rows)).collect();
            estimator(&idx)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let width = replicates[0].len();
    if replicates.iter().any(|r| r.len() != width) {
        return Err(Error::Numerical("bootstrap estimator returned varying lengths".into()));
    }
    let tail = (1.0 - level) / 2.0;
    Ok((0..width)
        .map(|j| {
            let mut column: Vec<f64> = replicates.iter().map(|r| r[j]).filter(|v| !v.is_nan()).collect();
            if column.is_empty() {
                return Interval { lo: f64::NAN, hi: f64::NAN };
            }
            column.sort_by(f64::total_cmp);
            Interval {
                lo: quantile_sorted(&column, tail),
                hi: quantile_sorted(&column, 1.0 - tail),
            }
        })
        .collect())
}

/// Percentile bootstrap band of a per-grid-point estimator over rows of
/// `data`.
pub fn bootstrap_band<F>(data: &LabeledScores, estimator: F, n_boot: usize, level: f64, seed: u64) -> Result<Vec<Interval>>
where
    F: Fn(&LabeledScores) -> Result<Vec<f64>> + Sync,
{
    bootstrap_rows(data.len(), |idx| estimator(&data.subset(idx)), n_boot, level, seed)
}

/// Smoothed calibration curve evaluated on a fixed grid, for use as a
/// bootstrap estimator.
pub fn curve_on_grid(data: &LabeledScores, grid: &[f64], config: &LocRegConfig) -> Result<Vec<f64>> {
    locreg::smoothed_calibration_curve(&data.scores, &data.labels, config)?.predict(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ls(scores: &[f64], labels: &[u8]) -> LabeledScores {
        LabeledScores::new(scores.to_vec(), labels.to_vec(), None).unwrap()
    }

    #[test]
    fn validation() {
        assert!(LabeledScores::new(vec![], vec![], None).is_err());
        assert!(LabeledScores::new(vec![0.2], vec![0, 1], None).is_err());
        assert!(LabeledScores::new(vec![1.2], vec![0], None).is_err());
        assert!(LabeledScores::new(vec![0.2], vec![3], None).is_err());
        assert!(LabeledScores::new(vec![0.2], vec![1], Some(vec![0.1, 0.2])).is_err());
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&ls(&[0.0, 1.0, 1.0], &[0, 1, 1])), 0.0);
        assert_eq!(brier(&ls(&[0.5; 4], &[0, 1, 1, 0])), 0.25);
    }

    #[test]
    fn true_mse_examples() {
        let truth = vec![0.2, 0.4, 0.6];
        let data = LabeledScores::new(truth.clone(), vec![0, 1, 0], Some(truth.clone())).unwrap();
        assert_eq!(true_mse(&data, &truth).unwrap(), 0.0);
        let shifted: Vec<f64> = truth.iter().map(|p| p + 0.1).collect();
        assert_abs_diff_eq!(true_mse(&data, &shifted).unwrap(), 0.01, epsilon = 1e-15);
        assert!(true_mse(&ls(&[0.2], &[1]), &[0.2]).is_err());
    }

    #[test]
    fn ece_extremes() {
        assert_eq!(ece(&ls(&[1.0; 5], &[1; 5]), 1, 0.5).unwrap(), 0.0);
        assert_eq!(ece(&ls(&[0.0; 5], &[0; 5]), 1, 0.5).unwrap(), 1.0);
        assert!(ece(&ls(&[0.3; 2], &[0, 1]), 3, 0.5).is_err());
        assert!(ece(&ls(&[0.3; 2], &[0, 1]), 0, 0.5).is_err());
    }

    #[test]
    fn ece_hand_enumerated_fixture() {
        // Lower bin rows: scores .1 .2 .3 .4, labels 0 0 1 0, predictions all 0
        //   acc = 3/4, conf = 0.25 -> |0.5|
        // Upper bin rows: scores .6 .7 .8 .9, labels 1 0 1 1, predictions all 1
        //   acc = 3/4, conf = 0.75 -> 0
        // ECE = 0.5 * 0.5 + 0.5 * 0 = 0.25
        let data = ls(&[0.7, 0.1, 0.9, 0.3, 0.2, 0.8, 0.4, 0.6], &[0, 0, 1, 1, 0, 1, 0, 1]);
        assert_abs_diff_eq!(ece(&data, 2, 0.5).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn quantile_bins_merge_duplicate_edges() {
        let scores = [0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.7, 0.9];
        // Cut positions 2, 4 and 6 fall on 0.2, 0.2 and 0.7.
        let groups = quantile_bins(&scores, 4).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[1], vec![6, 7]);
        assert_eq!(groups.iter().map(Vec::len).sum::<usize>(), 8);
        assert!(groups.iter().all(|g| !g.is_empty()));
        assert_eq!(quantile_bins(&[0.5; 6], 3).unwrap().len(), 1);
        assert!(quantile_bins(&[0.5; 2], 3).is_err());
    }

    #[test]
    fn reliability_curve_examples() {
        let c = quantile_calibration_curve(&ls(&[0.3; 10], &[1, 0, 0, 1, 0, 0, 1, 0, 0, 0]), 1).unwrap();
        assert_eq!(c.bins.len(), 1);
        assert_abs_diff_eq!(c.bins[0].mean_score, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(c.bins[0].mean_outcome, 0.3, epsilon = 1e-15);

        let c = quantile_calibration_curve(&ls(&[0.0, 0.01, 0.02, 0.98, 0.99, 1.0], &[0, 0, 0, 1, 1, 1]), 2).unwrap();
        assert!(c.bins[0].mean_score < 0.05 && c.bins[0].mean_outcome == 0.0);
        assert!(c.bins[1].mean_score > 0.95 && c.bins[1].mean_outcome == 1.0);

        let scores = [0.15, 0.9, 0.4, 0.65, 0.05];
        let labels = [1, 0, 0, 1, 1];
        let c = quantile_calibration_curve(&ls(&scores, &labels), 5).unwrap();
        let mut raw: Vec<(f64, f64)> = scores.iter().zip(labels).map(|(&s, l)| (s, f64::from(l))).collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let pts: Vec<(f64, f64)> = c.bins.iter().map(|b| (b.mean_score, b.mean_outcome)).collect();
        assert_eq!(pts, raw);
    }

    #[test]
    fn lcs_weighting() {
        let grid = locreg::linear_grid(0.0, 1.0, 11);
        let w = vec![1.0 / 11.0; 11];
        assert_eq!(bisector_deviation(&grid, &grid, &w), 0.0);
        let shifted: Vec<f64> = grid.iter().map(|l| l + 0.1).collect();
        assert_abs_diff_eq!(bisector_deviation(&grid, &shifted, &w), 0.01, epsilon = 1e-15);

        let scores = [0.0, 0.04, 0.06, 0.5, 1.0];
        let w = density_weights(&grid, &scores);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_eq!(w[0], 0.4);
        assert_eq!(w[1], 0.2);
        assert_eq!(w[5], 0.2);
        assert_eq!(w[10], 0.2);
    }

    #[test]
    fn lcs_of_locally_pure_scores_is_zero() {
        let data = ls(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[0, 0, 0, 1, 1, 1]);
        assert_abs_diff_eq!(lcs(&data, &LocRegConfig::default()).unwrap(), 0.0, epsilon = 1e-15);
        assert!(lcs(&ls(&[0.3], &[1]), &LocRegConfig::default()).is_err());
    }

    #[test]
    fn classification_report_examples() {
        let r = classification_report(&ls(&[0.0, 1.0, 1.0, 0.0], &[0, 1, 1, 0]), 0.5).unwrap();
        assert_eq!(r.accuracy, 1.0);

        let r = classification_report(&ls(&[0.5, 0.7, 0.9], &[1, 1, 1]), 0.5).unwrap();
        assert_eq!(r.sensitivity, 1.0);
        assert!(r.specificity.is_nan());

        // scores .1 .4 .5 .6 .8 .3 vs labels 0 1 0 1 1 0 at tau .5:
        // predictions 0 0 1 1 1 0 -> tp 2 (rows 3,4), fp 1 (row 2),
        // tn 2 (rows 0,5), fn 1 (row 1).
        let r = classification_report(&ls(&[0.1, 0.4, 0.5, 0.6, 0.8, 0.3], &[0, 1, 0, 1, 1, 0]), 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.tn, r.fn_), (2, 1, 2, 1));
        assert_abs_diff_eq!(r.accuracy, 4.0 / 6.0);
        assert_abs_diff_eq!(r.sensitivity, 2.0 / 3.0);
        assert_abs_diff_eq!(r.specificity, 2.0 / 3.0);
        assert!(classification_report(&ls(&[0.1], &[0]), 1.5).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&ls(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(auc(&ls(&[0.4; 6], &[0, 1, 0, 1, 1, 0])).unwrap(), 0.5);
        assert!(matches!(auc(&ls(&[0.4, 0.5], &[1, 1])), Err(Error::SingleClass(1))));
        // pairs (pos, neg): (.3,.1) 1, (.3,.3) .5, (.3,.5) 0, (.6,*) 1,1,1 -> 4.5 / 6
        assert_eq!(auc(&ls(&[0.1, 0.3, 0.3, 0.5, 0.6], &[0, 1, 0, 0, 1])).unwrap(), 0.75);
    }

    #[test]
    fn bootstrap_band_contracts() {
        let data = ls(&[0.3; 20], &[1; 20]);
        let band = bootstrap_band(&data, |d| Ok(vec![d.scores().iter().sum::<f64>() / d.len() as f64]), 50, 0.95, 1).unwrap();
        assert_abs_diff_eq!(band[0].lo, band[0].hi, epsilon = 1e-15);
        assert!(bootstrap_band(&data, |_| Ok(vec![0.0]), 1, 0.95, 1).is_err());
        assert!(bootstrap_band(&data, |_| Ok(vec![0.0]), 10, 1.0, 1).is_err());

        let data = ls(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], &[0, 1, 0, 1, 1, 0]);
        let mean = |d: &LabeledScores| Ok(vec![d.scores().iter().sum::<f64>() / d.len() as f64]);
        let a = bootstrap_band(&data, mean, 100, 0.9, 11).unwrap();
        let b = bootstrap_band(&data, mean, 100, 0.9, 11).unwrap();
        assert_eq!(a, b);
        assert!(a[0].lo < 0.35 && a[0].hi > 0.35);
    }

    proptest! {
        #[test]
        fn metrics_are_bounded_and_permutation_invariant(
            rows in prop::collection::vec((0.0f64..=1.0, 0u8..=1), 12..80),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let (s, l): (Vec<f64>, Vec<u8>) = rows.iter().copied().unzip();
            let data = LabeledScores::new(s, l, None).unwrap();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let (s2, l2): (Vec<f64>, Vec<u8>) = shuffled.into_iter().unzip();
            let perm = LabeledScores::new(s2, l2, None).unwrap();

            let b = brier(&data);
            prop_assert!((0.0..=1.0).contains(&b));
            prop_assert!((b - brier(&perm)).abs() < 1e-12);

            let e = ece(&data, 10, 0.5).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&e));
            prop_assert!((e - ece(&perm, 10, 0.5).unwrap()).abs() < 1e-12);

            let c = lcs(&data, &LocRegConfig::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!((c - lcs(&perm, &LocRegConfig::default()).unwrap()).abs() < 1e-12);

            if let Ok(a) = auc(&data) {
                prop_assert_eq!(a, auc(&perm).unwrap());
            }
        }

        #[test]
        fn auc_invariant_under_monotone_transforms(
            rows in prop::collection::vec((0.01f64..0.99, 0u8..=1), 4..60),
            power in 0.2f64..5.0,
        ) {
            let (s, l): (Vec<f64>, Vec<u8>) = rows.into_iter().unzip();
            prop_assume!(l.contains(&0) && l.contains(&1));
            let data = LabeledScores::new(s.clone(), l.clone(), None).unwrap();
            let powered = LabeledScores::new(s.iter().map(|v| v.powf(power)).collect(), l, None).unwrap();
            // Distinct inputs may collide after rounding; compare tie structure first.
            let distinct = |v: &[f64]| { let mut w = v.to_vec(); w.sort_by(f64::total_cmp); w.dedup(); w.len() };
            prop_assume!(distinct(data.scores()) == distinct(powered.scores()));
            prop_assert_eq!(auc(&data).unwrap(), auc(&powered).unwrap());
        }
    }
}
