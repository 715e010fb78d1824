//! Closed-form concentration of the nuisance amplitude and noise variance, and
//! the resulting profile log-likelihood of one pair observation.
//!
//! For a candidate steering vector `psi` (with `psi^H psi = N`):
//!
//! - `alpha_hat = psi^H z / N`
//! - `sigma2_hat = tr(P_perp z z^H) / N = ||z||^2 / N - |psi^H z|^2 / N^2`
//!
//! Since `||P_perp z||^2 = N sigma2_hat`, the reinserted Gaussian density is
//! `exp(-N) / (pi sigma2_hat)^N`. The code keeps only `-N ln sigma2_hat`; the
//! dropped constant `-N (1 + ln pi)` is identical for every evaluation with the
//! same `N` and cancels in every weight normalization.

use num_complex::Complex64;

use crate::geometry::{local_params, ApertureState, ArrayConfig};
use crate::manifold::FusedSteering;
use crate::{Error, Result};

/// Relative size of negative round-off tolerated in `sigma2_hat`.
const NEGATIVE_TOLERANCE: f64 = 1e-12;
const RELATIVE_FLOOR: f64 = 1e-300;
const ABSOLUTE_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentratedStats {
    pub amp_hat: Complex64,
    pub noise_var_hat: f64,
    /// `-N ln(sigma2_hat)` with the floor applied.
    pub log_likelihood: f64,
}

fn check_lengths(z: &[Complex64], psi: &[Complex64]) -> Result<()> {
    if z.len() != psi.len() {
        return Err(Error::LengthMismatch {
            expected: psi.len(),
            actual: z.len(),
        });
    }
    Ok(())
}

fn inner(psi: &[Complex64], z: &[Complex64]) -> Complex64 {
    psi.iter().zip(z).map(|(p, x)| p.conj() * x).sum()
}

fn energy(z: &[Complex64]) -> f64 {
    z.iter().map(|x| x.norm_sqr()).sum()
}

pub fn amplitude_ml(z: &[Complex64], psi: &[Complex64]) -> Result<Complex64> {
    check_lengths(z, psi)?;
    Ok(inner(psi, z) / z.len() as f64)
}

/// `||z||^2 / N - |corr|^2 / N^2` with round-off clamping.
pub fn noise_variance_from_correlation(z_energy: f64, corr: Complex64, n: usize) -> Result<f64> {
    let n = n as f64;
    let per_sample = z_energy / n;
    let raw = per_sample - corr.norm_sqr() / (n * n);
    if raw >= 0.0 {
        Ok(raw)
    } else if raw >= -NEGATIVE_TOLERANCE * per_sample {
        Ok(0.0)
    } else {
        Err(Error::NumericalFault(format!(
            "noise variance estimate {raw:e} is negative beyond round-off (||z||^2/N = {per_sample:e})"
        )))
    }
}

pub fn noise_variance_ml(z: &[Complex64], psi: &[Complex64]) -> Result<f64> {
    check_lengths(z, psi)?;
    noise_variance_from_correlation(energy(z), inner(psi, z), z.len())
}

/// `-N ln(max(sigma2_hat, floor))`; the floor keeps a noiseless fit at the true
/// state finite while preserving the ordering of all other candidates.
pub fn log_likelihood_from_noise_var(noise_var: f64, z_energy: f64, n: usize) -> f64 {
    let floor = RELATIVE_FLOOR * z_energy / n as f64 + ABSOLUTE_FLOOR;
    -(n as f64) * noise_var.max(floor).ln()
}

pub fn concentrate(z: &[Complex64], psi: &[Complex64]) -> Result<ConcentratedStats> {
    check_lengths(z, psi)?;
    let n = z.len();
    let corr = inner(psi, z);
    let e = energy(z);
    let noise_var_hat = noise_variance_from_correlation(e, corr, n)?;
    Ok(ConcentratedStats {
        amp_hat: corr / n as f64,
        noise_var_hat,
        log_likelihood: log_likelihood_from_noise_var(noise_var_hat, e, n),
    })
}

/// Complete log of the reinserted density,
/// `-||z - psi alpha_hat||^2 / sigma2_hat - N ln(pi sigma2_hat)`, evaluated
/// from the explicit residual rather than the projector identity.
pub fn profile_log_density(z: &[Complex64], psi: &[Complex64]) -> Result<f64> {
    let stats = concentrate(z, psi)?;
    let residual: f64 = z
        .iter()
        .zip(psi)
        .map(|(x, p)| (x - p * stats.amp_hat).norm_sqr())
        .sum();
    let n = z.len() as f64;
    Ok(-residual / stats.noise_var_hat - n * (std::f64::consts::PI * stats.noise_var_hat).ln())
}

/// Profile log-likelihood of `z` for the link `tx -> rx`, computed through the
/// fused steering path.
pub fn log_profile_likelihood(
    z: &[Complex64],
    rx: &ApertureState,
    tx: &ApertureState,
    cfg: &ArrayConfig,
) -> Result<f64> {
    let pair = PairLikelihood::new(z.to_vec(), cfg)?;
    let mut ws = FusedSteering::new(cfg);
    pair.evaluate(rx, tx, cfg, &mut ws)
}

/// One observation prepared for repeated evaluation over many particle pairs.
#[derive(Debug, Clone)]
pub struct PairLikelihood {
    values: Vec<Complex64>,
    energy: f64,
}

impl PairLikelihood {
    pub fn new(values: Vec<Complex64>, cfg: &ArrayConfig) -> Result<Self> {
        if values.len() != cfg.n_channel() {
            return Err(Error::LengthMismatch {
                expected: cfg.n_channel(),
                actual: values.len(),
            });
        }
        let energy = energy(&values);
        Ok(Self { values, energy })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn evaluate(
        &self,
        rx: &ApertureState,
        tx: &ApertureState,
        cfg: &ArrayConfig,
        ws: &mut FusedSteering,
    ) -> Result<f64> {
        let params = local_params(rx, tx, cfg.propagation_speed)?;
        ws.set(&params, cfg);
        let corr = ws.correlate(&self.values);
        let n = self.values.len();
        let noise_var = noise_variance_from_correlation(self.energy, corr, n)?;
        Ok(log_likelihood_from_noise_var(noise_var, self.energy, n))
    }
}
