//! Synthetic line-of-sight channel snapshots `z = alpha * psi + w`.
//!
//! SNR is the per-complex-sample ratio `|alpha|^2 / sigma^2` with `|alpha| = 1`,
//! so `sigma^2 = 10^(-snr_db / 10)`. The amplitude phase is uniform on
//! `[0, 2pi)` and drawn independently for every ordered pair.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{ApertureState, ArrayConfig};
use crate::manifold::steering_vector;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelObservation {
    pub rx_id: usize,
    pub tx_id: usize,
    pub values: Vec<Complex64>,
    /// Simulation metadata, never seen by the estimator.
    pub true_amplitude: Complex64,
    pub true_noise_var: f64,
}

/// Noise variance for unit amplitude at the given SNR; `+inf` dB gives 0.
pub fn noise_variance_for_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

pub fn synthesize_observation<R: Rng + ?Sized>(
    rx: &ApertureState,
    tx: &ApertureState,
    cfg: &ArrayConfig,
    snr_db: f64,
    rng: &mut R,
) -> Result<ChannelObservation> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Config(format!("invalid SNR {snr_db} dB")));
    }
    let psi = steering_vector(rx, tx, cfg)?;
    let noise_var = noise_variance_for_snr(snr_db);
    let amplitude = Complex64::cis(2.0 * PI * rng.random::<f64>());
    let values = psi
        .as_slice()
        .iter()
        .map(|&p| {
            let w = if noise_var > 0.0 {
                complex_gaussian(rng, noise_var)
            } else {
                Complex64::new(0.0, 0.0)
            };
            amplitude * p + w
        })
        .collect();
    Ok(ChannelObservation {
        rx_id: 0,
        tx_id: 0,
        values,
        true_amplitude: amplitude,
        true_noise_var: noise_var,
    })
}

/// One observation per ordered pair `(rx, tx)`, `rx != tx`, in row-major order
/// of `(rx, tx)`. Ids are indices into `states`.
pub fn synthesize_all_pairs<R: Rng + ?Sized>(
    states: &[ApertureState],
    cfg: &ArrayConfig,
    snr_db: f64,
    rng: &mut R,
) -> Result<Vec<ChannelObservation>> {
    let j = states.len();
    if j < 2 {
        return Err(Error::Config(format!("need at least 2 apertures, got {j}")));
    }
    let mut out = Vec::with_capacity(j * (j - 1));
    for (rx_id, rx) in states.iter().enumerate() {
        for (tx_id, tx) in states.iter().enumerate() {
            if rx_id == tx_id {
                continue;
            }
            let mut obs = synthesize_observation(rx, tx, cfg, snr_db, rng)?;
            obs.rx_id = rx_id;
            obs.tx_id = tx_id;
            out.push(obs);
        }
    }
    Ok(out)
}
