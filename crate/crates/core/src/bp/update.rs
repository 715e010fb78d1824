//! Pairwise messages and the per-agent belief update.

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::particles::{
    effective_sample_size, exp_weights, normalize_log_weights, BeliefSummary, Bounds, ParticleSet,
    StateMatrix,
};
use super::resample::systematic_resample;
use super::{BpConfig, ProposalDensity, Tempering};
use crate::geometry::{ArrayConfig, StateVector, STATE_DIM};
use crate::likelihood::PairLikelihood;
use crate::manifold::FusedSteering;
use crate::{Error, Result};

/// Floor on the Gaussian surrogate density in the importance ratio.
pub const SURROGATE_FLOOR: f64 = 1e-300;

/// Smallest likelihood exponent tried by adaptive tempering.
pub const MIN_BETA: f64 = 1e-6;

/// Normalized log-weights of the stacked pair particles
/// `{(theta_rx^i, theta_tx^i)}` under the profile likelihood of one
/// observation. Particles are coupled by index. Geometrically degenerate
/// pairs (coincident positions) get weight zero.
pub fn pair_log_weights(
    pair: &PairLikelihood,
    rx: &ParticleSet,
    tx: &ParticleSet,
    cfg: &ArrayConfig,
) -> Result<Vec<f64>> {
    if rx.len() != tx.len() {
        return Err(Error::LengthMismatch {
            expected: rx.len(),
            actual: tx.len(),
        });
    }
    let raw: Vec<f64> = (0..rx.len())
        .into_par_iter()
        .map_init(
            || FusedSteering::new(cfg),
            |ws, i| match pair.evaluate(&rx.state(i), &tx.state(i), cfg, ws) {
                Err(Error::DegenerateGeometry) => Ok(f64::NEG_INFINITY),
                other => other,
            },
        )
        .collect::<Result<_>>()?;
    normalize_log_weights(&raw).ok_or_else(|| {
        Error::NumericalFault("every particle pair is geometrically degenerate".into())
    })
}

pub fn pair_weights(
    pair: &PairLikelihood,
    rx: &ParticleSet,
    tx: &ParticleSet,
    cfg: &ArrayConfig,
) -> Result<Vec<f64>> {
    pair_log_weights(pair, rx, tx, cfg).map(|lw| exp_weights(&lw))
}

/// Gaussian-optimal kernel bandwidth `(4 / (n (d + 2)))^(1 / (d + 4))`.
pub fn kernel_bandwidth(n: usize, d: usize) -> f64 {
    (4.0 / (n as f64 * (d as f64 + 2.0))).powf(1.0 / (d as f64 + 4.0))
}

/// Lower Cholesky factor of `cov + delta * tr(cov)/d * I`, starting from
/// `delta = jitter` and growing it tenfold up to three times.
pub fn regularized_cholesky(cov: &StateMatrix, jitter: f64) -> Option<StateMatrix> {
    let scale = cov.trace() / STATE_DIM as f64;
    let mut delta = jitter;
    for _ in 0..4 {
        let m = cov + StateMatrix::identity() * (delta * scale);
        if let Some(ch) = Cholesky::new(m) {
            let l = ch.l();
            if l.iter().all(|v| v.is_finite()) {
                return Some(l);
            }
        }
        delta *= 10.0;
    }
    None
}

/// Gaussian `N(mean, L L^T)` used as the proposal density of the previous
/// iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSurrogate {
    pub mean: StateVector,
    pub chol: StateMatrix,
    log_norm: f64,
}

impl GaussianSurrogate {
    pub fn new(mean: StateVector, chol: StateMatrix) -> Self {
        let log_det: f64 = chol.diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let log_norm = -0.5 * (STATE_DIM as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Self {
            mean,
            chol,
            log_norm,
        }
    }

    pub fn from_summary(summary: &BeliefSummary, jitter: f64) -> Option<Self> {
        regularized_cholesky(&summary.covariance, jitter).map(|l| Self::new(summary.mean, l))
    }

    pub fn log_density(&self, x: &StateVector) -> f64 {
        let d = x - self.mean;
        let y = self
            .chol
            .solve_lower_triangular(&d)
            .unwrap_or_else(|| StateVector::repeat(f64::INFINITY));
        self.log_norm - 0.5 * y.norm_squared()
    }
}

/// Exact density of the regularized proposal: an equal-weight mixture of
/// Gaussian kernels `N(c_k, L L^T)` around the resampled particles `c_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSurrogate {
    /// Centers premultiplied by `L^-1`.
    white: Vec<StateVector>,
    chol: StateMatrix,
    log_norm: f64,
}

impl KernelSurrogate {
    pub fn new(centers: &[StateVector], chol: StateMatrix) -> Option<Self> {
        if centers.is_empty() {
            return None;
        }
        let white = centers
            .iter()
            .map(|c| chol.solve_lower_triangular(c))
            .collect::<Option<Vec<_>>>()?;
        let g = GaussianSurrogate::new(StateVector::zeros(), chol);
        Some(Self {
            white,
            chol,
            log_norm: g.log_norm - (centers.len() as f64).ln(),
        })
    }

    pub fn log_density(&self, x: &StateVector) -> f64 {
        let Some(v) = self.chol.solve_lower_triangular(x) else {
            return f64::NEG_INFINITY;
        };
        // streaming log-sum-exp over the kernels
        let (mut max, mut sum) = (f64::NEG_INFINITY, 0.0);
        for u in &self.white {
            let e = -0.5 * (v - u).norm_squared();
            if e > max {
                sum = sum * (max - e).exp() + 1.0;
                max = e;
            } else {
                sum += (e - max).exp();
            }
        }
        self.log_norm + max + sum.ln()
    }
}

/// Density of the particles handed to the next update.
#[derive(Debug, Clone, PartialEq)]
pub enum Surrogate {
    Gaussian(GaussianSurrogate),
    Kernel(KernelSurrogate),
}

impl Surrogate {
    pub fn log_density(&self, x: &StateVector) -> f64 {
        match self {
            Surrogate::Gaussian(g) => g.log_density(x),
            Surrogate::Kernel(k) => k.log_density(x),
        }
    }
}

/// Result of one agent belief update.
#[derive(Debug, Clone)]
pub struct AgentUpdate {
    /// Resampled and regularized particles with equal weights.
    pub set: ParticleSet,
    /// Normalized weights of the input particles before resampling.
    pub weights: Vec<f64>,
    /// Weighted estimate before resampling.
    pub summary: BeliefSummary,
    pub surrogate: Surrogate,
    /// Likelihood exponent actually applied.
    pub beta: f64,
    /// Effective sample size of the final weights.
    pub ess: f64,
}

fn tempered(base: &[f64], lik: &[f64], beta: f64) -> Vec<f64> {
    base.iter()
        .zip(lik)
        .map(|(&b, &l)| {
            if l == f64::NEG_INFINITY {
                l
            } else {
                b + beta * l
            }
        })
        .collect()
}

fn ess_at(base: &[f64], lik: &[f64], beta: f64) -> f64 {
    normalize_log_weights(&tempered(base, lik, beta))
        .map(|lw| effective_sample_size(&exp_weights(&lw)))
        .unwrap_or(0.0)
}

/// Largest exponent in `[beta_prev, 1]` whose weights keep an effective
/// sample size of at least `goal`, or `beta_prev` when even that one falls
/// short. With `beta_prev == 0` the search starts by halving from 1 (down to
/// [`MIN_BETA`]).
fn choose_beta(base: &[f64], lik: &[f64], beta_prev: f64, goal: f64) -> f64 {
    if ess_at(base, lik, 1.0) >= goal {
        return 1.0;
    }
    let mut lo = beta_prev;
    let mut hi = 1.0;
    if lo == 0.0 {
        while ess_at(base, lik, hi) < goal {
            hi *= 0.5;
            if hi < MIN_BETA {
                return MIN_BETA;
            }
        }
        lo = hi;
        hi *= 2.0;
    } else if ess_at(base, lik, lo) < goal {
        return lo;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if ess_at(base, lik, mid) >= goal {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-3 * lo {
            break;
        }
    }
    lo
}

/// Caps log importance ratios at `log(mean) + log(n)/2` (truncated importance
/// sampling). `-inf` entries stay `-inf`.
pub fn truncate_log_ratios(log_r: &mut [f64]) {
    let finite = log_r.iter().filter(|v| v.is_finite()).count();
    if finite == 0 {
        return;
    }
    let max = log_r
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_r
        .iter()
        .filter(|v| v.is_finite())
        .map(|v| (v - max).exp())
        .sum();
    let cap = max + (sum / finite as f64).ln() + 0.5 * (finite as f64).ln();
    for v in log_r.iter_mut() {
        *v = v.min(cap);
    }
}

/// One agent update: reweight the current particles by
/// `prior / surrogate * w * prod(pair weights)^beta`, estimate mean and covariance,
/// resample systematically and move every particle with a Gaussian kernel.
///
/// `pair_log_weights` holds one normalized log-weight vector per incident
/// observation. `surrogate` is `None` while the particles are still the
/// initial draws from the prior box, in which case the prior ratio is 1 inside
/// the box. `beta_prev` is the likelihood exponent of the previous
/// iteration (0 at the start); it is ignored when tempering is off.
pub fn agent_update<R: Rng + ?Sized>(
    set: &ParticleSet,
    pair_log_weights: &[&[f64]],
    bounds: &Bounds,
    surrogate: Option<&Surrogate>,
    config: &BpConfig,
    beta_prev: f64,
    rng: &mut R,
) -> Result<AgentUpdate> {
    let n = set.len();
    let floor = SURROGATE_FLOOR.ln();
    let mut base: Vec<f64> = set
        .particles
        .par_iter()
        .map(|x| match surrogate {
            Some(g) => bounds.log_density(x) - g.log_density(x).max(floor),
            None if bounds.contains(x) => 0.0,
            None => f64::NEG_INFINITY,
        })
        .collect();
    if config.truncate_ratio {
        truncate_log_ratios(&mut base);
    }
    for (b, w) in base.iter_mut().zip(&set.weights) {
        *b += w.ln();
    }
    let lik: Vec<f64> = (0..n)
        .map(|i| pair_log_weights.iter().map(|lw| lw[i]).sum())
        .collect();

    let beta = match config.tempering {
        Tempering::Off => 1.0,
        Tempering::Adaptive { target_ess } => {
            choose_beta(&base, &lik, beta_prev, target_ess * n as f64)
        }
    };
    let log_w = normalize_log_weights(&tempered(&base, &lik, beta))
        .ok_or_else(|| Error::NumericalFault("all particle weights vanished".into()))?;
    let weights = exp_weights(&log_w);
    let ess = effective_sample_size(&weights);
    let summary = BeliefSummary::from_weighted(&set.particles, &weights);

    let chol = regularized_cholesky(&summary.covariance, config.jitter).ok_or_else(|| {
        Error::NumericalFault("belief covariance is not positive definite after jitter".into())
    })?;
    let h = config.kernel_bandwidth();
    let idx = systematic_resample(&weights, n, rng);
    debug_assert_eq!(idx.len(), n);
    let centers: Vec<StateVector> = idx.iter().map(|&i| set.particles[i]).collect();
    let particles = centers
        .iter()
        .map(|c| {
            let nu = StateVector::from_fn(|_, _| StandardNormal.sample(rng));
            c + chol * nu * h
        })
        .collect();
    let surrogate = match config.proposal {
        ProposalDensity::Gaussian => Surrogate::Gaussian(GaussianSurrogate::new(
            summary.mean,
            chol * (1.0 + h * h).sqrt(),
        )),
        ProposalDensity::Kernel => {
            Surrogate::Kernel(KernelSurrogate::new(&centers, chol * h).ok_or_else(|| {
                Error::NumericalFault("kernel proposal has a singular factor".into())
            })?)
        }
    };

    Ok(AgentUpdate {
        set: ParticleSet {
            particles,
            weights: vec![1.0 / n as f64; n],
            role: set.role,
        },
        weights,
        summary,
        surrogate,
        beta,
        ess,
    })
}
