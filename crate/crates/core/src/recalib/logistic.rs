//! Logistic regression by Newton-Raphson (equivalently IRLS).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sigmoid;

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per feature column.
    pub coefficients: Vec<f64>,
    /// Standard errors from the inverse observed information.
    pub std_errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl LogisticFit {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row))
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients[0] + row.iter().zip(&self.coefficients[1..]).map(|(x, b)| x * b).sum::<f64>()
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_likelihood(eta: &[f64], labels: &[u8]) -> f64 {
    eta.iter()
        .zip(labels)
        .map(|(&e, &d)| f64::from(d) * e - softplus(e))
        .sum()
}

/// Maximum-likelihood logistic regression of `labels` on the feature
/// columns (each of length n) plus an intercept.
///
/// Complete separation is reported through `converged == false` rather
/// than an error; a single-class response is an error.
pub fn fit_logistic(columns: &[Vec<f64>], labels: &[u8]) -> Result<LogisticFit> {
    let n = labels.len();
    let p = columns.len() + 1;
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::input("feature columns and labels differ in length"));
    }
    if n <= columns.len() {
        return Err(Error::input(format!("{n} observations cannot identify {} features", columns.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::input(format!("label {l} is not binary")));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(Error::SingleClass(0));
    }
    if positives == n {
        return Err(Error::SingleClass(1));
    }
    if columns.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::input("features must be finite"));
    }

    let row = |i: usize, j: usize| if j == 0 { 1.0 } else { columns[j - 1][i] };
    let linear = |beta: &[f64]| -> Vec<f64> {
        (0..n).map(|i| (0..p).map(|j| row(i, j) * beta[j]).sum()).collect()
    };

    let mut beta = vec![0.0; p];
    let mut eta = linear(&beta);
    let mut ll = log_likelihood(&eta, labels);
    let mut iterations = 0;
    let mut converged = false;
    let mut hessian = vec![vec![0.0; p]; p];

    loop {
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut grad = vec![0.0; p];
        for r in hessian.iter_mut() {
            r.fill(0.0);
        }
        for i in 0..n {
            let resid = f64::from(labels[i]) - mu[i];
            let w = mu[i] * (1.0 - mu[i]);
            for a in 0..p {
                let xa = row(i, a);
                grad[a] += xa * resid;
                for b in 0..=a {
                    hessian[a][b] += w * xa * row(i, b);
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hessian[b][a] = hessian[a][b];
            }
        }

        if grad.iter().all(|g| g.abs() < GRADIENT_TOLERANCE) {
            converged = true;
            break;
        }
        if iterations >= MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let step = match cholesky_solve(&hessian, &grad) {
            Some(s) => s,
            None => break,
        };
        // Step halving guards against overshoot far from the optimum.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let trial_eta = linear(&trial);
            let trial_ll = log_likelihood(&trial_eta, labels);
            if trial_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = trial;
                eta = trial_eta;
                ll = trial_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    // Fitted probabilities reproducing every label signal separation; the
    // gradient can vanish there while the coefficients diverge.
    let separated = eta
        .iter()
        .zip(labels)
        .all(|(&e, &d)| (sigmoid(e) - f64::from(d)).abs() < 1e-6);
    if separated {
        converged = false;
    }

    let std_errors = match invert_spd(&hessian) {
        Some(inv) => (0..p).map(|j| inv[j][j].sqrt()).collect(),
        None => vec![f64::NAN; p],
    };

    Ok(LogisticFit {
        coefficients: beta,
        std_errors,
        converged,
        iterations,
        log_likelihood: ll,
    })
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = a.len();
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn forward_back(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = l.len();
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    cholesky(a).map(|l| forward_back(&l, b))
}

fn invert_spd(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let l = cholesky(a)?;
    let p = a.len();
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            forward_back(&l, &e)
        })
        .collect();
    Some((0..p).map(|i| (0..p).map(|j| cols[j][i]).collect()).collect())
}
