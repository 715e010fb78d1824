//! Aperture states, URA layouts and the mapping from global states to the local
//! spherical parameters (delay, angle of arrival, angle of departure) of a pair.
//!
//! Orientation uses intrinsic ZYX Euler angles `eta = (yaw, pitch, roll)`:
//! `M = Rz(yaw) * Ry(pitch) * Rx(roll)`. Columns of `M` are the aperture's local
//! axes expressed in global coordinates, so `M^T` maps global vectors into the
//! aperture frame. The template URA lies in the local yz-plane with boresight
//! along local +x.

use nalgebra::{Matrix3, Matrix3xX, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT};

pub const STATE_DIM: usize = 7;

/// Stacked state `[x, y, z, yaw, pitch, roll, c*eps]`.
pub type StateVector = SVector<f64, STATE_DIM>;

/// Global state of one aperture.
///
/// The clock offset is stored as path-length equivalent (`c * eps`, meters) so
/// that all seven coordinates share meter/radian scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureState {
    #[serde(rename = "position_m")]
    pub position: Vector3<f64>,
    #[serde(rename = "orientation_rad")]
    pub orientation: Vector3<f64>,
    pub clock_offset_m: f64,
}

impl ApertureState {
    pub fn new(position: [f64; 3], orientation: [f64; 3], clock_offset_m: f64) -> Self {
        Self {
            position: Vector3::from(position),
            orientation: Vector3::from(orientation),
            clock_offset_m,
        }
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self {
            position: Vector3::new(v[0], v[1], v[2]),
            orientation: Vector3::new(v[3], v[4], v[5]),
            clock_offset_m: v[6],
        }
    }

    pub fn to_vector(&self) -> StateVector {
        StateVector::from_column_slice(&[
            self.position.x,
            self.position.y,
            self.position.z,
            self.orientation.x,
            self.orientation.y,
            self.orientation.z,
            self.clock_offset_m,
        ])
    }

    /// Clock offset in seconds.
    pub fn clock_offset_s(&self, c: f64) -> f64 {
        self.clock_offset_m / c
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_vector().iter().all(|v| v.is_finite()) {
            return Err(Error::Config(
                "aperture state has non-finite entries".into(),
            ));
        }
        let pitch = self.orientation.y;
        if pitch.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Config(format!(
                "pitch {pitch} rad is at or beyond gimbal lock (|pitch| < pi/2 required)"
            )));
        }
        Ok(())
    }
}

/// Template aperture: baseband frequency support and URA sensor positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    #[serde(rename = "freqs_hz")]
    pub freqs: Vec<f64>,
    #[serde(rename = "pos_y_m")]
    pub pos_y: Vec<f64>,
    #[serde(rename = "pos_z_m")]
    pub pos_z: Vec<f64>,
    #[serde(rename = "wavelength_m")]
    pub wavelength: f64,
    #[serde(rename = "propagation_speed_mps")]
    pub propagation_speed: f64,
}

/// `n` points spaced by `step`, exactly symmetric about zero.
pub fn symmetric_grid(n: usize, step: f64) -> Vec<f64> {
    let half = 0.5 * step;
    (0..n)
        .map(|k| (2.0 * k as f64 - (n as f64 - 1.0)) * half)
        .collect()
}

fn is_symmetric(v: &[f64]) -> bool {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (0..n).all(|k| sorted[k] == -sorted[n - 1 - k])
}

impl ArrayConfig {
    pub fn new(
        freqs: Vec<f64>,
        pos_y: Vec<f64>,
        pos_z: Vec<f64>,
        wavelength: f64,
        propagation_speed: f64,
    ) -> Result<Self> {
        let cfg = Self {
            freqs,
            pos_y,
            pos_z,
            wavelength,
            propagation_speed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `n_freqs` bins uniformly spanning `bandwidth` around the carrier and an
    /// `n_y x n_z` URA with element spacing `spacing`.
    pub fn uniform(
        n_freqs: usize,
        bandwidth: f64,
        carrier: f64,
        n_y: usize,
        n_z: usize,
        spacing: f64,
    ) -> Result<Self> {
        let step = if n_freqs > 1 {
            bandwidth / (n_freqs as f64 - 1.0)
        } else {
            0.0
        };
        Self::new(
            symmetric_grid(n_freqs, step),
            symmetric_grid(n_y, spacing),
            symmetric_grid(n_z, spacing),
            SPEED_OF_LIGHT / carrier,
            SPEED_OF_LIGHT,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("freqs", &self.freqs),
            ("pos_y", &self.pos_y),
            ("pos_z", &self.pos_z),
        ] {
            if v.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Config(format!("{name} has non-finite entries")));
            }
            if !is_symmetric(v) {
                return Err(Error::Config(format!("{name} must be symmetric about 0")));
            }
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::Config("wavelength must be positive".into()));
        }
        if !(self.propagation_speed > 0.0 && self.propagation_speed.is_finite()) {
            return Err(Error::Config("propagation speed must be positive".into()));
        }
        Ok(())
    }

    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    /// Number of sensors of one aperture, `N_y * N_z`.
    pub fn n_sensors(&self) -> usize {
        self.pos_y.len() * self.pos_z.len()
    }

    /// Observation length `N = N_f * N_y^2 * N_z^2`.
    pub fn n_channel(&self) -> usize {
        self.n_freqs() * self.n_sensors() * self.n_sensors()
    }
}

/// Delay and angle pairs of one ordered link in the local aperture frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalChannelParams {
    pub delay: f64,
    pub aoa_el: f64,
    pub aoa_az: f64,
    pub aod_el: f64,
    pub aod_az: f64,
}

pub fn rotation_matrix(eta: &Vector3<f64>) -> Matrix3<f64> {
    let (sy, cy) = eta.x.sin_cos();
    let (sp, cp) = eta.y.sin_cos();
    let (sr, cr) = eta.z.sin_cos();
    Matrix3::new(
        cy * cp,
        cy * sp * sr - sy * cr,
        cy * sp * cr + sy * sr,
        sy * cp,
        sy * sp * sr + cy * cr,
        sy * sp * cr - cy * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

pub fn template_layout(cfg: &ArrayConfig) -> Matrix3xX<f64> {
    let n_z = cfg.pos_z.len();
    let mut layout = Matrix3xX::zeros(cfg.n_sensors());
    for (iy, &py) in cfg.pos_y.iter().enumerate() {
        for (iz, &pz) in cfg.pos_z.iter().enumerate() {
            let col = iy * n_z + iz;
            layout[(1, col)] = py;
            layout[(2, col)] = pz;
        }
    }
    layout
}

/// Sensor positions of a physical aperture in global coordinates.
pub fn physical_layout(state: &ApertureState, cfg: &ArrayConfig) -> Matrix3xX<f64> {
    let mut layout = rotation_matrix(&state.orientation) * template_layout(cfg);
    for mut col in layout.column_iter_mut() {
        col += state.position;
    }
    layout
}

/// Elevation from the local +z axis, in `[0, pi]`.
pub fn elevation(r: &Vector3<f64>) -> f64 {
    (r.z / r.norm()).clamp(-1.0, 1.0).acos()
}

/// Azimuth in the local xy-plane, in `(-pi, pi]`.
pub fn azimuth(r: &Vector3<f64>) -> f64 {
    // `+ 0.0` maps -0.0 to +0.0 so the negative x-axis gives pi, not -pi
    (r.y + 0.0).atan2(r.x)
}

/// Maps global receiver/transmitter states to the local parameters of the
/// link `tx -> rx`. `c` converts the meter-equivalent clock offsets.
pub fn local_params(rx: &ApertureState, tx: &ApertureState, c: f64) -> Result<LocalChannelParams> {
    let r = tx.position - rx.position;
    let dist = r.norm();
    if !(dist > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    let r_rx = rotation_matrix(&rx.orientation).transpose() * r;
    let r_tx = rotation_matrix(&tx.orientation).transpose() * (-r);
    Ok(LocalChannelParams {
        delay: r_rx.norm() / c + (rx.clock_offset_s(c) - tx.clock_offset_s(c)),
        aoa_el: elevation(&r_rx),
        aoa_az: azimuth(&r_rx),
        aod_el: elevation(&r_tx),
        aod_az: azimuth(&r_tx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    const C: f64 = SPEED_OF_LIGHT;

    fn rx_ry_rz(eta: &Vector3<f64>) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
        let (sy, cy) = eta.x.sin_cos();
        let (sp, cp) = eta.y.sin_cos();
        let (sr, cr) = eta.z.sin_cos();
        let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        (rx, ry, rz)
    }

    #[test]
    fn zero_rotation_is_identity() {
        assert_eq!(rotation_matrix(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn yaw_quarter_turn_maps_x_to_y() {
        let m = rotation_matrix(&Vector3::new(FRAC_PI_2, 0.0, 0.0));
        let y = m * Vector3::x();
        assert!((y - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn matches_explicit_zyx_composition() {
        let eta = Vector3::new(0.7, -0.4, 2.1);
        let (rx, ry, rz) = rx_ry_rz(&eta);
        assert!((rotation_matrix(&eta) - rz * ry * rx).norm() < 1e-14);
    }

    #[test]
    fn template_single_element() {
        let cfg = ArrayConfig::new(vec![0.0], vec![0.0], vec![0.0], 1.0, C).unwrap();
        let t = template_layout(&cfg);
        assert_eq!(t.ncols(), 1);
        assert_eq!(t.column(0).into_owned(), Vector3::zeros());
    }

    #[test]
    fn template_two_by_two() {
        let d = 0.02;
        let cfg = ArrayConfig::new(
            vec![0.0],
            vec![-d / 2.0, d / 2.0],
            vec![-d / 2.0, d / 2.0],
            1.0,
            C,
        )
        .unwrap();
        let t = template_layout(&cfg);
        let expected = [
            (-d / 2.0, -d / 2.0),
            (-d / 2.0, d / 2.0),
            (d / 2.0, -d / 2.0),
            (d / 2.0, d / 2.0),
        ];
        for (k, (y, z)) in expected.iter().enumerate() {
            assert_eq!(t[(0, k)], 0.0);
            assert_eq!(t[(1, k)], *y);
            assert_eq!(t[(2, k)], *z);
        }
    }

    #[test]
    fn half_wavelength_ura_grid() {
        let lambda = C / 6.175e9;
        let d = lambda / 2.0;
        let cfg = ArrayConfig::uniform(1, 0.0, 6.175e9, 4, 4, d).unwrap();
        let t = template_layout(&cfg);
        assert_eq!(t.ncols(), 16);
        let mean = t.column_mean();
        assert!(mean.norm() < 1e-15);
        // enumerate the grid: neighbours along y differ by 4 columns, along z by 1
        for iy in 0..4 {
            for iz in 0..3 {
                let k = iy * 4 + iz;
                assert!(close(t[(2, k + 1)] - t[(2, k)], d, 1e-15));
            }
        }
        for iy in 0..3 {
            for iz in 0..4 {
                let k = iy * 4 + iz;
                assert!(close(t[(1, k + 4)] - t[(1, k)], d, 1e-15));
            }
        }
    }

    #[test]
    fn asymmetric_support_rejected() {
        assert!(ArrayConfig::new(vec![0.0, 1.0], vec![0.0], vec![0.0], 1.0, C).is_err());
        assert!(ArrayConfig::new(vec![-1.0, 1.0], vec![], vec![0.0], 1.0, C).is_err());
    }

    #[test]
    fn physical_layout_translates_identity() {
        let cfg = ArrayConfig::uniform(1, 0.0, 6e9, 2, 3, 0.025).unwrap();
        let s = ApertureState::new([1.0, 2.0, 3.0], [0.0; 3], 0.0);
        let p = physical_layout(&s, &cfg);
        let t = template_layout(&cfg);
        for k in 0..t.ncols() {
            assert_eq!(p.column(k), t.column(k) + s.position);
        }
        let origin = ApertureState::new([0.0; 3], [0.0; 3], 0.0);
        assert_eq!(physical_layout(&origin, &cfg), t);
    }

    #[test]
    fn boresight_elevation_zero() {
        let rx = ApertureState::new([0.0; 3], [0.0; 3], 0.0);
        let tx = ApertureState::new([0.0, 0.0, 1.0], [0.0; 3], 0.0);
        let lp = local_params(&rx, &tx, C).unwrap();
        assert_eq!(lp.aoa_el, 0.0);
        assert!(close(lp.delay, 1.0 / C, 1e-24));
    }

    #[test]
    fn x_axis_angles() {
        let rx = ApertureState::new([0.0; 3], [0.0; 3], 0.0);
        let tx = ApertureState::new([1.0, 0.0, 0.0], [0.0; 3], 0.0);
        let lp = local_params(&rx, &tx, C).unwrap();
        assert!(close(lp.aoa_el, FRAC_PI_2, 1e-15));
        assert_eq!(lp.aoa_az, 0.0);
        assert!(close(lp.aod_el, FRAC_PI_2, 1e-15));
        assert!(close(lp.aod_az, PI, 1e-15));
    }

    #[test]
    fn clock_offset_adds_to_delay() {
        let rx = ApertureState::new([0.0; 3], [0.0; 3], 0.30);
        let tx = ApertureState::new([10.0, 0.0, 0.0], [0.0; 3], 0.0);
        let lp = local_params(&rx, &tx, C).unwrap();
        assert!(close(lp.delay, 10.30 / C, 1e-22));
    }

    #[test]
    fn coincident_positions_rejected() {
        let a = ApertureState::new([1.0, 1.0, 1.0], [0.1, 0.0, 0.0], 0.0);
        let b = ApertureState::new([1.0, 1.0, 1.0], [0.0, 0.2, 0.0], 0.0);
        assert!(matches!(
            local_params(&a, &b, C),
            Err(Error::DegenerateGeometry)
        ));
    }

    #[test]
    fn gimbal_lock_rejected() {
        let s = ApertureState::new([0.0; 3], [0.0, FRAC_PI_2, 0.0], 0.0);
        assert!(s.validate().is_err());
        let s = ApertureState::new([0.0; 3], [3.0, 1.5, -3.0], 0.0);
        assert!(s.validate().is_ok());
    }

    fn arb_eta() -> impl Strategy<Value = Vector3<f64>> {
        (-PI..PI, -1.5..1.5f64, -PI..PI).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    fn arb_state() -> impl Strategy<Value = ApertureState> {
        (prop::array::uniform3(-5.0..5.0f64), arb_eta(), -0.5..0.5f64).prop_map(|(p, eta, e)| {
            ApertureState {
                position: Vector3::from(p),
                orientation: eta,
                clock_offset_m: e,
            }
        })
    }

    proptest! {
        #[test]
        fn rotation_is_special_orthogonal(eta in arb_eta()) {
            let m = rotation_matrix(&eta);
            prop_assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn reversed_negated_composition_inverts(eta in arb_eta()) {
            let (rx, ry, rz) = rx_ry_rz(&(-eta));
            let inv = rx * ry * rz;
            prop_assert!((inv * rotation_matrix(&eta) - Matrix3::identity()).norm() < 1e-12);
        }

        #[test]
        fn physical_layout_is_isometric(s in arb_state()) {
            let cfg = ArrayConfig::uniform(1, 0.0, 6.175e9, 4, 4, 0.0243).unwrap();
            let p = physical_layout(&s, &cfg);
            let t = template_layout(&cfg);
            prop_assert!((p.column_mean() - s.position).norm() < 1e-12);
            for a in 0..t.ncols() {
                for b in 0..t.ncols() {
                    let dp = (p.column(a) - p.column(b)).norm();
                    let dt = (t.column(a) - t.column(b)).norm();
                    prop_assert!((dp - dt).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn local_vectors_preserve_length(rx in arb_state(), tx in arb_state()) {
            let r = tx.position - rx.position;
            prop_assume!(r.norm() > 1e-3);
            let r_rx = rotation_matrix(&rx.orientation).transpose() * r;
            let r_tx = rotation_matrix(&tx.orientation).transpose() * (-r);
            prop_assert!((r_rx.norm() - r.norm()).abs() < 1e-12);
            prop_assert!((r_tx.norm() - r.norm()).abs() < 1e-12);
            let lp = local_params(&rx, &tx, C).unwrap();
            for el in [lp.aoa_el, lp.aod_el] {
                prop_assert!((0.0..=PI).contains(&el));
            }
            for az in [lp.aoa_az, lp.aod_az] {
                prop_assert!(az > -PI && az <= PI);
            }
        }

        #[test]
        fn propagation_delay_is_reciprocal(mut rx in arb_state(), mut tx in arb_state()) {
            prop_assume!((tx.position - rx.position).norm() > 1e-3);
            rx.clock_offset_m = 0.0;
            tx.clock_offset_m = 0.0;
            let fwd = local_params(&rx, &tx, C).unwrap();
            let bwd = local_params(&tx, &rx, C).unwrap();
            prop_assert!((fwd.delay - bwd.delay).abs() < 1e-20);
        }

        #[test]
        fn common_clock_shift_is_invisible(rx in arb_state(), tx in arb_state(), shift in -2.0..2.0f64) {
            prop_assume!((tx.position - rx.position).norm() > 1e-3);
            let a = local_params(&rx, &tx, C).unwrap();
            let mut rx2 = rx;
            let mut tx2 = tx;
            rx2.clock_offset_m += shift;
            tx2.clock_offset_m += shift;
            let b = local_params(&rx2, &tx2, C).unwrap();
            prop_assert!((a.delay - b.delay).abs() < 1e-17);
            prop_assert_eq!(a.aoa_el, b.aoa_el);
            prop_assert_eq!(a.aod_az, b.aod_az);
        }
    }
}
