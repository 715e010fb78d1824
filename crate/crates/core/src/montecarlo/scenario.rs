use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bp::{Bounds, BpConfig, Node, Role};
use crate::geometry::{ApertureState, ArrayConfig, StateVector};
use crate::{Error, Result, SPEED_OF_LIGHT};

pub const DEFAULT_CARRIER_HZ: f64 = 6.175e9;
pub const DEFAULT_BANDWIDTH_HZ: f64 = 500e6;
pub const DEFAULT_DIVERGENCE_THRESHOLD_M: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApertureSpec {
    pub id: usize,
    pub role: Role,
    pub truth: ApertureState,
    /// Prior box; required for agents, ignored for anchors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub snr_db: f64,
    pub n_runs: usize,
    pub master_seed: u64,
    pub divergence_threshold_m: f64,
    pub array: ArrayConfig,
    pub bp: BpConfig,
    pub apertures: Vec<ApertureSpec>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid snr_db {}", self.snr_db)));
        }
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if !(self.divergence_threshold_m > 0.0) {
            return Err(Error::Config(format!(
                "divergence_threshold_m must be positive, got {}",
                self.divergence_threshold_m
            )));
        }
        self.array.validate()?;
        self.bp.validate()?;
        let mut ids = HashSet::new();
        for a in &self.apertures {
            if !ids.insert(a.id) {
                return Err(Error::Config(format!("duplicate aperture id {}", a.id)));
            }
            a.truth.validate()?;
            if a.role == Role::Agent {
                let b = a
                    .bounds
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("agent {} needs prior bounds", a.id)))?;
                b.validate()?;
                if !b.contains(&a.truth.to_vector()) {
                    return Err(Error::Config(format!(
                        "agent {} truth lies outside its bounds",
                        a.id
                    )));
                }
            }
        }
        let n_anchor = self
            .apertures
            .iter()
            .filter(|a| a.role == Role::Anchor)
            .count();
        let n_agent = self.apertures.len() - n_anchor;
        if n_anchor == 0 || n_agent == 0 {
            return Err(Error::Config(format!(
                "need at least one anchor and one agent, got {n_anchor} anchors and {n_agent} agents"
            )));
        }
        for (i, a) in self.apertures.iter().enumerate() {
            for b in &self.apertures[i + 1..] {
                if (a.truth.position - b.truth.position).norm() == 0.0 {
                    return Err(Error::Config(format!(
                        "apertures {} and {} share a position",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn truths(&self) -> Vec<ApertureState> {
        self.apertures.iter().map(|a| a.truth).collect()
    }

    /// Estimator view of the apertures: anchors with known state, agents with
    /// their prior boxes.
    pub fn nodes(&self) -> Result<Vec<Node>> {
        self.apertures
            .iter()
            .map(|a| match a.role {
                Role::Anchor => Ok(Node::Anchor(a.truth)),
                Role::Agent => a
                    .bounds
                    .map(Node::Agent)
                    .ok_or_else(|| Error::Config(format!("agent {} needs prior bounds", a.id))),
            })
            .collect()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}

/// The four-aperture setup: anchors 1 and 4, agents 2 and 3, 10 frequency
/// bins over 500 MHz at 6.175 GHz, 4x4 half-wavelength URAs, 10 dB SNR.
///
/// Positions, orientations and clock offsets are a fixed layout inside a
/// 5 m region. Agent boxes are offset from the truth so that the first
/// estimates start meters, radians and tens of centimeters away.
pub fn default_scenario() -> ScenarioConfig {
    let wavelength = SPEED_OF_LIGHT / DEFAULT_CARRIER_HZ;
    let array = ArrayConfig::uniform(
        10,
        DEFAULT_BANDWIDTH_HZ,
        DEFAULT_CARRIER_HZ,
        4,
        4,
        wavelength / 2.0,
    )
    .expect("default array is valid");

    let truths = [
        ApertureState::new([0.0, 0.0, 1.2], [0.6, 0.10, -0.15], 0.0),
        ApertureState::new([4.2, 0.8, 1.5], [2.3, -0.12, 0.20], 0.35),
        ApertureState::new([0.9, 4.4, 1.0], [-1.1, 0.15, 0.10], -0.40),
        ApertureState::new([4.6, 4.1, 1.8], [-2.4, -0.08, -0.12], 0.10),
    ];
    let agent_box = |truth: &ApertureState, offset: [f64; 7]| {
        let half = StateVector::from_column_slice(&[2.0, 2.0, 1.0, 2.0, 0.6, 1.0, 0.8]);
        let center = truth.to_vector() + StateVector::from_column_slice(&offset);
        Bounds::around(&center, &half).expect("default bounds are valid")
    };
    let bounds2 = agent_box(&truths[1], [0.9, -0.8, 0.3, 1.0, 0.2, -0.5, -0.45]);
    let bounds3 = agent_box(&truths[2], [-0.7, 1.0, -0.3, -1.2, -0.25, 0.6, 0.50]);

    let apertures = vec![
        ApertureSpec {
            id: 1,
            role: Role::Anchor,
            truth: truths[0],
            bounds: None,
        },
        ApertureSpec {
            id: 2,
            role: Role::Agent,
            truth: truths[1],
            bounds: Some(bounds2),
        },
        ApertureSpec {
            id: 3,
            role: Role::Agent,
            truth: truths[2],
            bounds: Some(bounds3),
        },
        ApertureSpec {
            id: 4,
            role: Role::Anchor,
            truth: truths[3],
            bounds: None,
        },
    ];
    debug_assert!(apertures
        .iter()
        .all(|a| a.truth.orientation.iter().all(|e| e.abs() < PI)));

    ScenarioConfig {
        snr_db: 10.0,
        n_runs: 100,
        master_seed: 2024,
        divergence_threshold_m: DEFAULT_DIVERGENCE_THRESHOLD_M,
        array,
        bp: BpConfig::default(),
        apertures,
    }
}
