//! Synthetic binary outcomes with known event probabilities, plus the two
//! score distortions used to simulate a miscalibrated model.
//!
//! The linear predictor is `a1*x1 + a2*x2 + a3*x3 - a4*x4 + eps` with
//! `x_j ~ U[0, 1]` and `eps ~ N(0, noise_sd^2)`; the event probability is its
//! logistic transform and the label a Bernoulli draw from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigmoid;

pub const DEFAULT_COEFFICIENTS: [f64; 4] = [0.1, 0.05, 0.2, -0.05];
pub const DEFAULT_NOISE_SD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub coefficients: [f64; 4],
    pub noise_sd: f64,
    pub seed: u64,
}

impl DgpConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            coefficients: DEFAULT_COEFFICIENTS,
            noise_sd: DEFAULT_NOISE_SD,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("sample size must be at least 1"));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config(format!(
                "noise standard deviation must be positive, got {}",
                self.noise_sd
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("coefficients must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub x: [f64; 4],
    pub eta: f64,
    pub p_true: f64,
    pub d: u8,
}

pub fn linear_predictor(coefficients: &[f64; 4], x: &[f64; 4], noise: f64) -> f64 {
    let [a1, a2, a3, a4] = *coefficients;
    a1 * x[0] + a2 * x[1] + a3 * x[2] - a4 * x[3] + noise
}

/// Draws `config.n` samples. Identical configs give bit-identical output.
pub fn generate(config: &DgpConfig) -> Result<Vec<SyntheticSample>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sd)
        .map_err(|e| Error::config(format!("noise distribution: {e}")))?;

    let samples = (0..config.n)
        .map(|_| {
            let x: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
            let eps = noise.sample(&mut rng);
            let eta = linear_predictor(&config.coefficients, &x, eps);
            let p_true = sigmoid(eta);
            let d = u8::from(rng.random::<f64>() < p_true);
            SyntheticSample { x, eta, p_true, d }
        })
        .collect();
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionKind {
    /// Power applied to the event probability.
    Alpha,
    /// Scale applied to the whole linear predictor.
    Gamma,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub value: f64,
}

impl DistortionSpec {
    pub fn alpha(value: f64) -> Self {
        Self { kind: DistortionKind::Alpha, value }
    }

    pub fn gamma(value: f64) -> Self {
        Self { kind: DistortionKind::Gamma, value }
    }

    pub fn identity() -> Self {
        Self { kind: DistortionKind::None, value: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.value > 0.0 && self.value.is_finite()) {
            return Err(Error::config(format!(
                "distortion value must be positive, got {}",
                self.value
            )));
        }
        Ok(())
    }

    /// Distorted score for a single sample.
    pub fn apply_one(&self, sample: &SyntheticSample) -> f64 {
        if self.value == 1.0 {
            return sample.p_true;
        }
        match self.kind {
            DistortionKind::Alpha => sample.p_true.powf(self.value),
            DistortionKind::Gamma => sigmoid(self.value * sample.eta),
            DistortionKind::None => sample.p_true,
        }
    }
}

/// Distorted scores `p_u`, one per sample. A value of 1 returns `p_true`
/// unchanged for both kinds.
pub fn distort(samples: &[SyntheticSample], spec: &DistortionSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(samples.iter().map(|s| spec.apply_one(s)).collect())
}
