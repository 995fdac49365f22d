//! Post-hoc recalibration maps fitted on a held-out calibration set:
//! Platt scaling, isotonic regression, beta calibration and local
//! polynomial regression of degree 0, 1 or 2.

mod isotonic;
mod logistic;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use isotonic::{pava, pava_unweighted};
pub use logistic::{fit_logistic, LogisticFit, GRADIENT_TOLERANCE, MAX_ITERATIONS};

use crate::error::{Error, Result, Warning};
use crate::locreg::{self, LocRegConfig, LocalFit};
use crate::metrics::LabeledScores;
use crate::sigmoid;

/// Scores are clipped to `[SCORE_EPS, 1 - SCORE_EPS]` before log transforms.
pub const SCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Platt,
    Isotonic,
    Beta,
    Local0,
    Local1,
    Local2,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Platt,
        Method::Isotonic,
        Method::Beta,
        Method::Local0,
        Method::Local1,
        Method::Local2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Platt => "platt",
            Method::Isotonic => "isotonic",
            Method::Beta => "beta",
            Method::Local0 => "local0",
            Method::Local1 => "local1",
            Method::Local2 => "local2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown recalibration method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum CalibrationMap {
    /// `sigmoid(a * s + b)`.
    Platt { a: f64, b: f64 },
    /// Right-continuous step function through `(knot_scores[i], knot_values[i])`.
    Isotonic { knot_scores: Vec<f64>, knot_values: Vec<f64> },
    /// `1 / (1 + exp(-c) * (1 - s)^b / s^a)`.
    Beta { a: f64, b: f64, c: f64 },
    Local { fit: LocalFit },
}

impl CalibrationMap {
    fn apply_one(&self, s: f64) -> Result<f64> {
        if s.is_nan() {
            return Err(Error::input("cannot recalibrate a NaN score"));
        }
        let raw = match self {
            CalibrationMap::Platt { a, b } => sigmoid(a * s + b),
            CalibrationMap::Isotonic { knot_scores, knot_values } => {
                let idx = knot_scores.partition_point(|&k| k <= s);
                knot_values[idx.saturating_sub(1)]
            }
            CalibrationMap::Beta { a, b, c } => {
                let s = s.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
                sigmoid(c + a * s.ln() - b * (1.0 - s).ln())
            }
            CalibrationMap::Local { fit } => fit.predict_one(s)?,
        };
        Ok(raw.clamp(0.0, 1.0))
    }
}

/// A fitted recalibration map plus any warnings raised while fitting it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recalibrator {
    pub map: CalibrationMap,
    pub warnings: Vec<Warning>,
}

impl Recalibrator {
    pub fn from_map(map: CalibrationMap) -> Self {
        Self { map, warnings: Vec::new() }
    }

    /// Recalibrated scores, clamped to `[0, 1]`.
    pub fn apply(&self, scores: &[f64]) -> Result<Vec<f64>> {
        scores.iter().map(|&s| self.map.apply_one(s)).collect()
    }
}

fn logistic_warnings(fit: &LogisticFit) -> Vec<Warning> {
    if fit.converged {
        Vec::new()
    } else {
        vec![Warning::NotConverged { iterations: fit.iterations }]
    }
}

pub fn fit_platt(data: &LabeledScores) -> Result<Recalibrator> {
    let fit = fit_logistic(&[data.scores().to_vec()], data.labels())?;
    Ok(Recalibrator {
        warnings: logistic_warnings(&fit),
        map: CalibrationMap::Platt { a: fit.coefficients[1], b: fit.coefficients[0] },
    })
}

pub fn fit_isotonic(data: &LabeledScores) -> Result<Recalibrator> {
    let scores = data.scores();
    let labels = data.labels();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Tied scores are pooled first so each distinct score gets one value.
    let mut distinct: Vec<f64> = Vec::new();
    let mut means: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for &i in &order {
        let d = f64::from(labels[i]);
        if distinct.last() == Some(&scores[i]) {
            let last = means.len() - 1;
            means[last] += d;
            weights[last] += 1.0;
        } else {
            distinct.push(scores[i]);
            means.push(d);
            weights.push(1.0);
        }
    }
    for (m, w) in means.iter_mut().zip(&weights) {
        *m /= w;
    }
    let fitted = pava(&means, &weights);

    let mut knot_scores = Vec::new();
    let mut knot_values: Vec<f64> = Vec::new();
    for (s, v) in distinct.into_iter().zip(fitted) {
        if knot_values.last() != Some(&v) {
            knot_scores.push(s);
            knot_values.push(v);
        }
    }
    Ok(Recalibrator::from_map(CalibrationMap::Isotonic { knot_scores, knot_values }))
}

pub fn fit_beta(data: &LabeledScores) -> Result<Recalibrator> {
    let clipped = data.scores().iter().map(|s| s.clamp(SCORE_EPS, 1.0 - SCORE_EPS));
    let (log_s, neg_log_1ms): (Vec<f64>, Vec<f64>) = clipped.map(|s| (s.ln(), -(1.0 - s).ln())).unzip();
    let fit = fit_logistic(&[log_s, neg_log_1ms], data.labels())?;
    let (c, a, b) = (fit.coefficients[0], fit.coefficients[1], fit.coefficients[2]);
    let mut warnings = logistic_warnings(&fit);
    if a < 0.0 || b < 0.0 {
        warnings.push(Warning::NonMonotoneBeta { a, b });
    }
    Ok(Recalibrator { map: CalibrationMap::Beta { a, b, c }, warnings })
}

pub fn fit_local(data: &LabeledScores, config: &LocRegConfig) -> Result<Recalibrator> {
    let y: Vec<f64> = data.labels().iter().map(|&l| f64::from(l)).collect();
    let fit = locreg::fit(data.scores(), &y, config)?;
    Ok(Recalibrator::from_map(CalibrationMap::Local { fit }))
}

/// Fits `method` on calibration data. Local methods use `local_config`
/// with the degree taken from the method.
pub fn fit(method: Method, data: &LabeledScores, local_config: &LocRegConfig) -> Result<Recalibrator> {
    let local = |degree| fit_local(data, &LocRegConfig { degree, ..*local_config });
    match method {
        Method::Platt => fit_platt(data),
        Method::Isotonic => fit_isotonic(data),
        Method::Beta => fit_beta(data),
        Method::Local0 => local(0),
        Method::Local1 => local(1),
        Method::Local2 => local(2),
    }
}
