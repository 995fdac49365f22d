//! One-dimensional local polynomial regression with nearest-neighbour
//! bandwidths and tricube weights.
//!
//! A fit evaluates the local polynomial exactly at `grid_size` linearly
//! spaced points spanning the observed range of `x`; predictions elsewhere
//! interpolate linearly between those points and clamp outside them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBOR_FRACTION: f64 = 0.7;
pub const DEFAULT_GRID_SIZE: usize = 101;

/// Ridge added to the non-intercept diagonal when the local normal
/// equations are rank deficient.
pub const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocRegConfig {
    pub degree: usize,
    pub neighbor_fraction: f64,
    pub grid_size: usize,
}

impl Default for LocRegConfig {
    fn default() -> Self {
        Self {
            degree: 0,
            neighbor_fraction: DEFAULT_NEIGHBOR_FRACTION,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

impl LocRegConfig {
    pub fn with_degree(degree: usize) -> Self {
        Self { degree, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree > 2 {
            return Err(Error::config(format!("degree must be 0, 1 or 2, got {}", self.degree)));
        }
        if !(self.neighbor_fraction > 0.0 && self.neighbor_fraction <= 1.0) {
            return Err(Error::config(format!(
                "neighbor fraction must lie in (0, 1], got {}",
                self.neighbor_fraction
            )));
        }
        if self.grid_size < 2 {
            return Err(Error::config(format!("grid size must be at least 2, got {}", self.grid_size)));
        }
        Ok(())
    }

    /// Number of nearest neighbours used at each evaluation point.
    pub fn neighbor_count(&self, n: usize) -> usize {
        let k = (self.neighbor_fraction * n as f64).ceil() as usize;
        k.clamp(1, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    config: LocRegConfig,
    #[serde(skip)]
    train_x: Vec<f64>,
    #[serde(skip)]
    train_y: Vec<f64>,
    eval_points: Vec<f64>,
    eval_values: Vec<f64>,
}

impl LocalFit {
    /// Builds a fit directly from an evaluation grid, e.g. one read back
    /// from disk. Points must be non-decreasing and finite.
    pub fn from_grid(config: LocRegConfig, eval_points: Vec<f64>, eval_values: Vec<f64>) -> Result<Self> {
        if eval_points.is_empty() || eval_points.len() != eval_values.len() {
            return Err(Error::input("evaluation grid and values must be non-empty and equally long"));
        }
        if eval_points.iter().chain(&eval_values).any(|v| !v.is_finite()) {
            return Err(Error::input("evaluation grid contains non-finite values"));
        }
        if eval_points.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::input("evaluation points must be sorted"));
        }
        Ok(Self { config, train_x: Vec::new(), train_y: Vec::new(), eval_points, eval_values })
    }

    pub fn config(&self) -> &LocRegConfig {
        &self.config
    }

    pub fn degree(&self) -> usize {
        self.config.degree
    }

    pub fn train_x(&self) -> &[f64] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn eval_points(&self) -> &[f64] {
        &self.eval_points
    }

    pub fn eval_values(&self) -> &[f64] {
        &self.eval_values
    }

    /// Piecewise-linear interpolation of the fitted grid.
    pub fn predict(&self, queries: &[f64]) -> Result<Vec<f64>> {
        queries.iter().map(|&q| self.predict_one(q)).collect()
    }

    pub fn predict_one(&self, q: f64) -> Result<f64> {
        if q.is_nan() {
            return Err(Error::input("query is NaN"));
        }
        let points = &self.eval_points;
        let values = &self.eval_values;
        let last = points.len() - 1;
        if q <= points[0] {
            return Ok(values[0]);
        }
        if q >= points[last] {
            return Ok(values[last]);
        }
        // First index with points[idx] > q; q lies in [points[idx-1], points[idx]).
        let idx = points.partition_point(|&p| p <= q);
        let (x0, x1) = (points[idx - 1], points[idx]);
        let (y0, y1) = (values[idx - 1], values[idx]);
        if q == x0 {
            return Ok(y0);
        }
        let t = (q - x0) / (x1 - x0);
        Ok((1.0 - t) * y0 + t * y1)
    }
}

/// Linearly spaced grid of `size` points from `lo` to `hi`, endpoints exact.
pub fn linear_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    let step = (hi - lo) / (size - 1) as f64;
    let mut grid: Vec<f64> = (0..size).map(|i| lo + step * i as f64).collect();
    grid[size - 1] = hi;
    grid
}

#[inline]
pub fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

fn validate_xy(x: &[f64], y: &[f64], degree: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::input("local regression needs at least one observation"));
    }
    if x.len() != y.len() {
        return Err(Error::input(format!("x has {} values but y has {}", x.len(), y.len())));
    }
    if x.len() < degree + 1 {
        return Err(Error::input(format!(
            "degree {degree} needs at least {} observations, got {}",
            degree + 1,
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::input("local regression inputs must be finite"));
    }
    Ok(())
}

/// Fits the local polynomial at every grid point spanning `[min x, max x]`.
pub fn fit(x: &[f64], y: &[f64], config: &LocRegConfig) -> Result<LocalFit> {
    config.validate()?;
    validate_xy(x, y, config.degree)?;

    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let eval_points = linear_grid(lo, hi, config.grid_size);
    let k = config.neighbor_count(x.len());

    let mut distances = vec![0.0; x.len()];
    let mut scratch = vec![0.0; x.len()];
    let eval_values = eval_points
        .iter()
        .map(|&at| {
            for (d, &xi) in distances.iter_mut().zip(x) {
                *d = (xi - at).abs();
            }
            scratch.copy_from_slice(&distances);
            let (_, &mut bandwidth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
            local_estimate(x, y, &distances, bandwidth, at, config.degree)
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(LocalFit {
        config: *config,
        train_x: x.to_vec(),
        train_y: y.to_vec(),
        eval_points,
        eval_values,
    })
}

/// Tricube weights on `distance / bandwidth`. Points exactly at the
/// bandwidth get zero weight; when that leaves nothing (a zero bandwidth or
/// all neighbours equidistant) the neighbourhood is weighted uniformly.
pub(crate) fn neighborhood_weights(distances: &[f64], bandwidth: f64) -> Vec<f64> {
    if bandwidth > 0.0 {
        let w: Vec<f64> = distances.iter().map(|&d| tricube(d / bandwidth)).collect();
        if w.iter().any(|&v| v > 0.0) {
            return w;
        }
    }
    distances.iter().map(|&d| if d <= bandwidth { 1.0 } else { 0.0 }).collect()
}

fn local_estimate(x: &[f64], y: &[f64], distances: &[f64], bandwidth: f64, at: f64, degree: usize) -> Result<f64> {
    let weights = neighborhood_weights(distances, bandwidth);

    if degree == 0 {
        let (mut sw, mut swy) = (0.0, 0.0);
        for (&w, &yi) in weights.iter().zip(y) {
            if w > 0.0 {
                sw += w;
                swy += w * yi;
            }
        }
        return Ok(swy / sw);
    }

    // Centred and scaled basis (1, u, u^2) with u = (x - at) / h; the
    // intercept is the fitted value at `at`.
    let scale = if bandwidth > 0.0 { bandwidth } else { 1.0 };
    let p = degree + 1;
    let mut xtwx = [[0.0; 3]; 3];
    let mut xtwy = [0.0; 3];
    for ((&w, &xi), &yi) in weights.iter().zip(x).zip(y) {
        if w == 0.0 {
            continue;
        }
        let u = (xi - at) / scale;
        let basis = [1.0, u, u * u];
        for r in 0..p {
            xtwy[r] += w * basis[r] * yi;
            for c in 0..p {
                xtwx[r][c] += w * basis[r] * basis[c];
            }
        }
    }

    match solve_small(&xtwx, &xtwy, p) {
        Some(beta) => Ok(beta[0]),
        None => {
            let mut ridged = xtwx;
            for (r, row) in ridged.iter_mut().enumerate().take(p).skip(1) {
                row[r] += RIDGE;
            }
            solve_small(&ridged, &xtwy, p)
                .map(|beta| beta[0])
                .ok_or_else(|| Error::Numerical("local normal equations are singular".into()))
        }
    }
}

/// Gaussian elimination with partial pivoting on the leading `p`x`p` block.
/// Returns `None` when a pivot is negligible relative to the matrix scale.
fn solve_small(a: &[[f64; 3]; 3], b: &[f64; 3], p: usize) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut rhs = *b;
    let scale = (0..p).map(|i| m[i][i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let tol = scale * 1e-12;
    for col in 0..p {
        let pivot = (col..p).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() <= tol {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..p {
            let f = m[row][col] / m[col][col];
            for c in col..p {
                m[row][c] -= f * m[col][c];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut out = [0.0; 3];
    for row in (0..p).rev() {
        let mut acc = rhs[row];
        for c in row + 1..p {
            acc -= m[row][c] * out[c];
        }
        out[row] = acc / m[row][row];
    }
    Some(out)
}

/// Degree-0 calibration curve: local mean of the labels around each score,
/// evaluated over the observed score range.
pub fn smoothed_calibration_curve(scores: &[f64], labels: &[u8], config: &LocRegConfig) -> Result<LocalFit> {
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::input(format!("score {s} outside [0, 1]")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::input(format!("label {l} is not binary")));
    }
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let config = LocRegConfig { degree: 0, ..*config };
    fit(scores, &y, &config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct-summation Nadaraya-Watson estimate with tricube weights and a
    /// k-nearest-neighbour bandwidth found by a full sort.
    fn nadaraya_watson(x: &[f64], y: &[f64], at: f64, k: usize) -> f64 {
        let mut sorted: Vec<f64> = x.iter().map(|xi| (xi - at).abs()).collect();
        sorted.sort_by(f64::total_cmp);
        let h = sorted[k - 1];
        let (mut num, mut den) = (0.0, 0.0);
        for (xi, yi) in x.iter().zip(y) {
            let d = (xi - at).abs();
            let w = if h > 0.0 && d < h { (1.0 - (d / h).powi(3)).powi(3) } else { 0.0 };
            num += w * yi;
            den += w;
        }
        if den == 0.0 {
            let mut c = 0.0;
            for (xi, yi) in x.iter().zip(y) {
                if (xi - at).abs() <= h {
                    num += yi;
                    c += 1.0;
                }
            }
            return num / c;
        }
        num / den
    }

    fn random_xy(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|&v| (6.0 * v).sin() + rng.random::<f64>()).collect();
        (x, y)
    }

    #[test]
    fn constant_response_reproduced_at_every_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, _) = random_xy(&mut rng, 80);
        let y = vec![0.37; x.len()];
        for degree in 0..=2 {
            let f = fit(&x, &y, &LocRegConfig::with_degree(degree)).unwrap();
            for v in f.eval_values() {
                assert_abs_diff_eq!(*v, 0.37, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn linear_response_reproduced_by_degree_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, _) = random_xy(&mut rng, 120);
        let f = fit(&x, &x, &LocRegConfig::with_degree(1)).unwrap();
        for (p, v) in f.eval_points().iter().zip(f.eval_values()) {
            assert_abs_diff_eq!(*v, *p, epsilon = 1e-10);
        }
    }

    #[test]
    fn degree_zero_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [5usize, 17, 60] {
            let (x, y) = random_xy(&mut rng, n);
            let config = LocRegConfig { degree: 0, neighbor_fraction: 0.3, grid_size: 31 };
            let f = fit(&x, &y, &config).unwrap();
            let k = config.neighbor_count(n);
            for (p, v) in f.eval_points().iter().zip(f.eval_values()) {
                assert_abs_diff_eq!(*v, nadaraya_watson(&x, &y, *p, k), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn grid_spans_observed_range() {
        let x = [0.2, 0.9, 0.5, 0.3];
        let f = fit(&x, &[0.0, 1.0, 1.0, 0.0], &LocRegConfig::default()).unwrap();
        assert_eq!(f.eval_points().len(), DEFAULT_GRID_SIZE);
        assert_eq!(f.eval_points()[0], 0.2);
        assert_eq!(*f.eval_points().last().unwrap(), 0.9);
        assert!(f.eval_points().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn prediction_interpolates_and_clamps() {
        let f = LocalFit::from_grid(LocRegConfig::default(), vec![0.0, 0.5, 1.0], vec![0.1, 0.3, 0.9]).unwrap();
        assert_eq!(f.predict_one(0.5).unwrap(), 0.3);
        assert_eq!(f.predict_one(1.0).unwrap(), 0.9);
        assert_abs_diff_eq!(f.predict_one(0.75).unwrap(), 0.6, epsilon = 1e-15);
        assert_eq!(f.predict_one(-3.0).unwrap(), 0.1);
        assert_eq!(f.predict_one(7.0).unwrap(), 0.9);
        assert!(f.predict_one(f64::NAN).is_err());
    }

    #[test]
    fn eval_points_predict_to_eval_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (x, y) = random_xy(&mut rng, 50);
        let f = fit(&x, &y, &LocRegConfig::with_degree(2)).unwrap();
        let got = f.predict(f.eval_points()).unwrap();
        assert_eq!(got, f.eval_values());
    }

    #[test]
    fn rejects_bad_input() {
        let c = LocRegConfig::default();
        assert!(fit(&[], &[], &c).is_err());
        assert!(fit(&[0.1, f64::NAN], &[0.0, 1.0], &c).is_err());
        assert!(fit(&[0.1, 0.2], &[0.0], &c).is_err());
        assert!(fit(&[0.1, 0.2], &[0.0, 1.0], &LocRegConfig::with_degree(2)).is_err());
        assert!(fit(&[0.1], &[0.0], &LocRegConfig { degree: 3, ..c }).is_err());
        assert!(fit(&[0.1], &[0.0], &LocRegConfig { neighbor_fraction: 0.0, ..c }).is_err());
        assert!(fit(&[0.1], &[0.0], &LocRegConfig { grid_size: 1, ..c }).is_err());
    }

    #[test]
    fn identical_x_uses_ridge_instead_of_failing() {
        let x = vec![0.4; 10];
        let y: Vec<f64> = (0..10).map(|i| f64::from(i % 2)).collect();
        for degree in 0..=2 {
            let f = fit(&x, &y, &LocRegConfig::with_degree(degree)).unwrap();
            for v in f.eval_values() {
                assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn minimal_neighbourhood_reduces_to_nearest_neighbour() {
        let x = [0.0, 0.1, 0.35, 0.6, 1.0];
        let y = [1.0, 5.0, -2.0, 4.0, 8.0];
        let config = LocRegConfig { degree: 0, neighbor_fraction: 0.2, grid_size: 21 };
        assert_eq!(config.neighbor_count(5), 1);
        let f = fit(&x, &y, &config).unwrap();
        for (p, v) in f.eval_points().iter().zip(f.eval_values()) {
            let dmin = x.iter().map(|xi| (xi - p).abs()).fold(f64::INFINITY, f64::min);
            let nn: Vec<f64> = x
                .iter()
                .zip(&y)
                .filter(|(xi, _)| (*xi - p).abs() == dmin)
                .map(|(_, yi)| *yi)
                .collect();
            let mean = nn.iter().sum::<f64>() / nn.len() as f64;
            assert_abs_diff_eq!(*v, mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn higher_degrees_are_not_clamped() {
        // Convex data near zero: a quadratic local fit dips below the data range.
        let x: Vec<f64> = (0..21).map(|i| f64::from(i) / 20.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v < 0.15 { 0.0 } else { (v - 0.15) * 1.5 }).collect();
        let f = fit(&x, &y, &LocRegConfig { degree: 2, neighbor_fraction: 0.5, grid_size: 21 }).unwrap();
        assert!(f.eval_values().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn calibration_curve_edges() {
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 3 == 0)).collect();
        let scores: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        let f = smoothed_calibration_curve(&scores, &labels, &LocRegConfig::default()).unwrap();
        assert_abs_diff_eq!(f.eval_values()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(*f.eval_values().last().unwrap(), 1.0, epsilon = 1e-12);

        let zeros = vec![0u8; 30];
        let s: Vec<f64> = (0..30).map(|i| f64::from(i) / 29.0).collect();
        let f = smoothed_calibration_curve(&s, &zeros, &LocRegConfig::with_degree(2)).unwrap();
        assert_eq!(f.degree(), 0);
        assert!(f.eval_values().iter().all(|&v| v == 0.0));

        assert!(smoothed_calibration_curve(&[1.5], &[1], &LocRegConfig::default()).is_err());
        assert!(smoothed_calibration_curve(&[0.5], &[2], &LocRegConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn degree_zero_stays_within_response_range(
            pts in prop::collection::vec((0.0f64..1.0, -5.0f64..5.0), 2..60),
            frac in 0.05f64..1.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let config = LocRegConfig { degree: 0, neighbor_fraction: frac, grid_size: 25 };
            let f = fit(&x, &y, &config).unwrap();
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in f.eval_values() {
                prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }

        #[test]
        fn fit_is_permutation_invariant(
            pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..40),
            seed in any::<u64>(),
            degree in 0usize..=2,
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let (x1, y1): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let (x2, y2): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
            let config = LocRegConfig::with_degree(degree);
            let a = fit(&x1, &y1, &config).unwrap();
            let b = fit(&x2, &y2, &config).unwrap();
            prop_assert_eq!(a.eval_points(), b.eval_points());
            for (u, v) in a.eval_values().iter().zip(b.eval_values()) {
                // near-singular local quadratics amplify summation-order rounding
                prop_assert!((u - v).abs() < 1e-6 * (1.0 + u.abs()), "{} vs {}", u, v);
            }
        }
    }
}
