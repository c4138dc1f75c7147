//! Loss terms of the detector objective and their gradients.

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

/// Per-class weights for the classification loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub anomaly: f64,
    pub normal: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights {
            anomaly: 1.0,
            normal: 1.0,
        }
    }
}

impl ClassWeights {
    pub fn new(anomaly: f64, normal: f64) -> Result<Self> {
        if anomaly > 0.0 && normal > 0.0 && anomaly.is_finite() && normal.is_finite() {
            Ok(ClassWeights { anomaly, normal })
        } else {
            Err(Error::InvalidArgument(format!(
                "class weights must be positive, got anomaly={anomaly} normal={normal}"
            )))
        }
    }

    /// Inverse class frequency, scaled so the mean weight over all points is 1.
    /// Falls back to unit weights when a class is absent.
    pub fn inverse_frequency(labels: &[u8]) -> Self {
        let n = labels.len() as f64;
        let anomalies = labels.iter().filter(|&&l| l == 1).count() as f64;
        let normals = n - anomalies;
        if anomalies == 0.0 || normals == 0.0 {
            return ClassWeights::default();
        }
        ClassWeights {
            anomaly: n / (2.0 * anomalies),
            normal: n / (2.0 * normals),
        }
    }

    #[inline]
    pub fn for_label(&self, label: u8) -> f64 {
        if label == 1 {
            self.anomaly
        } else {
            self.normal
        }
    }
}

/// Values of the four loss terms for one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub recon: f64,
    pub align: f64,
    pub disc: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.cls.is_finite() && self.recon.is_finite() && self.align.is_finite() && self.disc.is_finite()
    }
}

/// Weights of the four loss terms, shared by the detector objective and the reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta: f64,
    /// Weight of the alignment term (distinct from the agent's discount factor).
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            lambda: 1.0,
        }
    }
}

impl Coefficients {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.lambda];
        if all.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "coefficients must be finite and nonnegative: {self:?}"
            )));
        }
        if all.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidArgument("at least one coefficient must be positive".into()));
        }
        Ok(())
    }

    /// `alpha*cls + beta*recon + gamma*align + lambda*disc`, the detector objective.
    pub fn objective(&self, l: &LossBreakdown) -> f64 {
        self.alpha * l.cls + self.beta * l.recon + self.gamma * l.align + self.lambda * l.disc
    }
}

#[inline]
pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Weighted binary cross-entropy of one prediction.
#[inline]
pub fn bce(p: f64, label: u8, weight: f64) -> f64 {
    let p = clamp_probability(p);
    if label == 1 {
        -weight * p.ln()
    } else {
        -weight * (1.0 - p).ln()
    }
}

/// Derivative of [`bce`] with respect to the unclamped probability; zero where
/// the clamp is active.
#[inline]
pub fn bce_gradient(p: f64, label: u8, weight: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    if label == 1 {
        -weight / p
    } else {
        weight / (1.0 - p)
    }
}

/// Class-weighted binary cross-entropy summed over points.
pub fn loss_cls(probabilities: &[f64], labels: &[u8], weights: &ClassWeights) -> Result<f64> {
    check_lengths(probabilities.len(), labels.len())?;
    Ok(probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce(p, y, weights.for_label(y)))
        .sum())
}

/// Unweighted binary cross-entropy over domain predictions (0 = source, 1 = target).
pub fn loss_disc(probabilities: &[f64], domain_labels: &[u8]) -> Result<f64> {
    loss_cls(probabilities, domain_labels, &ClassWeights::default())
}

/// Sum of squared reconstruction errors over (window, reconstruction) pairs.
pub fn loss_recon(pairs: &[(&Matrix, &Matrix)]) -> Result<f64> {
    pairs
        .iter()
        .map(|(w, r)| w.squared_distance(r))
        .sum()
}

/// Sum of squared distances between paired source and target latents.
pub fn loss_align(source: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64> {
    check_lengths(source.len(), target.len())?;
    source
        .iter()
        .zip(target)
        .map(|(a, b)| {
            if a.len() == b.len() {
                Ok(squared_distance(a, b))
            } else {
                Err(Error::Shape(format!("latent lengths {} and {}", a.len(), b.len())))
            }
        })
        .sum()
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape(format!("{a} predictions but {b} labels")))
    }
}
