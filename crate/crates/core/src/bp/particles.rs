use nalgebra::SMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{ApertureState, StateVector, STATE_DIM};
use crate::{Error, Result};

pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Anchor,
    Agent,
}

/// Axis-aligned prior support of an agent state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: StateVector,
    pub max: StateVector,
}

impl Bounds {
    pub fn new(min: StateVector, max: StateVector) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    /// Box of half-widths `half` around `center`.
    pub fn around(center: &StateVector, half: &StateVector) -> Result<Self> {
        Self::new(center - half, center + half)
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..STATE_DIM {
            let (lo, hi) = (self.min[k], self.max[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "bounds coordinate {k}: min {lo} must be finite and below max {hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &StateVector) -> bool {
        (0..STATE_DIM).all(|k| x[k] >= self.min[k] && x[k] <= self.max[k])
    }

    pub fn center(&self) -> StateVector {
        (self.min + self.max) * 0.5
    }

    pub fn widths(&self) -> StateVector {
        self.max - self.min
    }

    /// Log density of the uniform distribution over the box.
    pub fn log_density(&self, x: &StateVector) -> f64 {
        if self.contains(x) {
            -self.widths().iter().map(|w| w.ln()).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        StateVector::from_fn(|k, _| self.min[k] + (self.max[k] - self.min[k]) * rng.random::<f64>())
    }
}

/// Weighted particle approximation of one aperture's belief.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<StateVector>,
    pub weights: Vec<f64>,
    pub role: Role,
}

impl ParticleSet {
    /// Point mass at a known state.
    pub fn anchor(state: &ApertureState, n: usize) -> Self {
        Self {
            particles: vec![state.to_vector(); n],
            weights: vec![1.0 / n as f64; n],
            role: Role::Anchor,
        }
    }

    /// I.i.d. uniform draws over the prior box with equal weights.
    pub fn uniform<R: Rng + ?Sized>(bounds: &Bounds, n: usize, rng: &mut R) -> Self {
        Self {
            particles: (0..n).map(|_| bounds.sample(rng)).collect(),
            weights: vec![1.0 / n as f64; n],
            role: Role::Agent,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn state(&self, i: usize) -> ApertureState {
        ApertureState::from_vector(&self.particles[i])
    }

    pub fn summary(&self) -> BeliefSummary {
        BeliefSummary::from_weighted(&self.particles, &self.weights)
    }
}

/// Weighted mean (MMSE estimate) and empirical covariance of a belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefSummary {
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl BeliefSummary {
    pub fn from_weighted(particles: &[StateVector], weights: &[f64]) -> Self {
        debug_assert_eq!(particles.len(), weights.len());
        let mean = particles
            .iter()
            .zip(weights)
            .fold(StateVector::zeros(), |acc, (x, &w)| acc + x * w);
        let covariance =
            particles
                .iter()
                .zip(weights)
                .fold(StateMatrix::zeros(), |acc, (x, &w)| {
                    let d = x - mean;
                    acc + d * d.transpose() * w
                });
        Self { mean, covariance }
    }

    pub fn state(&self) -> ApertureState {
        ApertureState::from_vector(&self.mean)
    }
}

/// Normalizes log-weights with the max-shift (log-sum-exp) trick. Returns
/// `None` when every entry is `-inf`, or any entry is `+inf` or NaN.
pub fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    if log_w.iter().any(|v| v.is_nan()) {
        return None;
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return None;
    }
    let sum: f64 = log_w.iter().map(|&v| (v - max).exp()).sum();
    let log_sum = sum.ln();
    Some(log_w.iter().map(|&v| (v - max) - log_sum).collect())
}

pub fn exp_weights(log_w: &[f64]) -> Vec<f64> {
    log_w.iter().map(|v| v.exp()).collect()
}

/// Effective sample size `1 / sum w^2` of normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}
