//! Spatiotemporal steering vectors on the N-torus.
//!
//! `psi = b(tau) ⊗ a(AoA) ⊗ a(AoD)` with `a(el, az) = a_y(el, az) ⊗ a_z(el)`.
//! Flattening follows the Kronecker product directly, so the temporal index
//! varies slowest and the AoD vertical index fastest:
//! `k = (((kf * Ny + ky_rx) * Nz + kz_rx) * Ny + ky_tx) * Nz + kz_tx`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::geometry::{local_params, ApertureState, ArrayConfig, LocalChannelParams};
use crate::Result;

/// Unit-modulus steering vector of length `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(Vec<Complex64>);

impl SteeringVector {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

impl AsRef<[Complex64]> for SteeringVector {
    fn as_ref(&self) -> &[Complex64] {
        &self.0
    }
}

pub fn temporal_steering(tau: f64, freqs: &[f64]) -> Vec<Complex64> {
    freqs
        .iter()
        .map(|&f| Complex64::cis(-2.0 * PI * f * tau))
        .collect()
}

pub fn spatial_steering_y(el: f64, az: f64, pos_y: &[f64], wavelength: f64) -> Vec<Complex64> {
    let k = 2.0 * PI / wavelength * el.sin() * az.sin();
    pos_y.iter().map(|&p| Complex64::cis(k * p)).collect()
}

pub fn spatial_steering_z(el: f64, pos_z: &[f64], wavelength: f64) -> Vec<Complex64> {
    let k = 2.0 * PI / wavelength * el.cos();
    pos_z.iter().map(|&p| Complex64::cis(k * p)).collect()
}

/// URA response `a_y ⊗ a_z` for one direction.
pub fn spatial_steering(el: f64, az: f64, cfg: &ArrayConfig) -> Vec<Complex64> {
    kron(
        &spatial_steering_y(el, az, &cfg.pos_y, cfg.wavelength),
        &spatial_steering_z(el, &cfg.pos_z, cfg.wavelength),
    )
}

pub fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| x * y))
        .collect()
}

pub fn steering_from_params(params: &LocalChannelParams, cfg: &ArrayConfig) -> SteeringVector {
    let b = temporal_steering(params.delay, &cfg.freqs);
    let aoa = spatial_steering(params.aoa_el, params.aoa_az, cfg);
    let aod = spatial_steering(params.aod_el, params.aod_az, cfg);
    SteeringVector(kron(&kron(&b, &aoa), &aod))
}

/// Steering vector of the link `tx -> rx`.
pub fn steering_vector(
    rx: &ApertureState,
    tx: &ApertureState,
    cfg: &ArrayConfig,
) -> Result<SteeringVector> {
    let params = local_params(rx, tx, cfg.propagation_speed)?;
    Ok(steering_from_params(&params, cfg))
}

/// Reusable buffers for evaluating `psi^H z` without materializing `psi`.
///
/// Only the temporal factor and the conjugated `N_y^2 N_z^2` spatial block are
/// formed; the correlation then runs one contiguous dot product per frequency.
#[derive(Debug, Clone)]
pub struct FusedSteering {
    temporal: Vec<Complex64>,
    spatial_conj: Vec<Complex64>,
    aoa: Vec<Complex64>,
    aod: Vec<Complex64>,
}

impl FusedSteering {
    pub fn new(cfg: &ArrayConfig) -> Self {
        let s = cfg.n_sensors();
        Self {
            temporal: vec![Complex64::new(0.0, 0.0); cfg.n_freqs()],
            spatial_conj: vec![Complex64::new(0.0, 0.0); s * s],
            aoa: vec![Complex64::new(0.0, 0.0); s],
            aod: vec![Complex64::new(0.0, 0.0); s],
        }
    }

    pub fn set(&mut self, params: &LocalChannelParams, cfg: &ArrayConfig) {
        for (b, &f) in self.temporal.iter_mut().zip(&cfg.freqs) {
            *b = Complex64::cis(-2.0 * PI * f * params.delay);
        }
        fill_spatial(&mut self.aoa, params.aoa_el, params.aoa_az, cfg);
        fill_spatial(&mut self.aod, params.aod_el, params.aod_az, cfg);
        let s = self.aod.len();
        for (m, &x) in self.aoa.iter().enumerate() {
            let row = &mut self.spatial_conj[m * s..(m + 1) * s];
            for (out, &y) in row.iter_mut().zip(&self.aod) {
                *out = (x * y).conj();
            }
        }
    }

    /// `psi^H z` for the currently loaded parameters.
    pub fn correlate(&self, z: &[Complex64]) -> Complex64 {
        let block = self.spatial_conj.len();
        debug_assert_eq!(z.len(), block * self.temporal.len());
        let mut total = Complex64::new(0.0, 0.0);
        for (b, zf) in self.temporal.iter().zip(z.chunks_exact(block)) {
            total += b.conj() * dot(&self.spatial_conj, zf);
        }
        total
    }

    pub fn materialize(&self) -> SteeringVector {
        let block: Vec<Complex64> = self.spatial_conj.iter().map(|c| c.conj()).collect();
        SteeringVector(kron(&self.temporal, &block))
    }
}

fn fill_spatial(out: &mut [Complex64], el: f64, az: f64, cfg: &ArrayConfig) {
    let (sin_el, cos_el) = el.sin_cos();
    let ky = 2.0 * PI / cfg.wavelength * sin_el * az.sin();
    let kz = 2.0 * PI / cfg.wavelength * cos_el;
    let n_z = cfg.pos_z.len();
    for (iy, &py) in cfg.pos_y.iter().enumerate() {
        let ay = Complex64::cis(ky * py);
        for (iz, &pz) in cfg.pos_z.iter().enumerate() {
            out[iy * n_z + iz] = ay * Complex64::cis(kz * pz);
        }
    }
}

/// Plain (non-conjugating) dot product with four independent accumulators.
fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            re[k] += xa[k].re * xb[k].re - xa[k].im * xb[k].im;
            im[k] += xa[k].re * xb[k].im + xa[k].im * xb[k].re;
        }
    }
    let mut acc = Complex64::new(re.iter().sum(), im.iter().sum());
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        acc += x * y;
    }
    acc
}
