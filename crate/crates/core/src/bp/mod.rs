//! Regularized particle-based loopy belief propagation over the fully connected
//! factor graph of apertures.
//!
//! Each iteration first weights the stacked particle pairs of every observation
//! that touches an agent (using the particle sets of the previous iteration),
//! then updates all agents from their incident pairs. Anchors are fixed point
//! masses and are never updated.

mod particles;
mod resample;
mod update;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use particles::{
    effective_sample_size, exp_weights, normalize_log_weights, BeliefSummary, Bounds, ParticleSet,
    Role, StateMatrix,
};
pub use resample::{systematic_resample, systematic_resample_with_offset};
pub use update::{
    agent_update, kernel_bandwidth, pair_log_weights, pair_weights, regularized_cholesky,
    truncate_log_ratios, AgentUpdate, GaussianSurrogate, KernelSurrogate, Surrogate, MIN_BETA,
    SURROGATE_FLOOR,
};

use crate::channel::ChannelObservation;
use crate::geometry::{ApertureState, ArrayConfig};
use crate::likelihood::PairLikelihood;
use crate::rng::substream;
use crate::{Error, Result};

/// Likelihood tempering of the agent update.
///
/// `Off` applies the pair weights with exponent 1 every iteration. `Adaptive`
/// keeps a per-agent exponent that starts as the largest value whose weights
/// have an effective sample size of `target_ess * n_particles`. Later
/// iterations raise it as far as that ESS allows and never lower it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Tempering {
    Off,
    Adaptive { target_ess: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// `(4 / (n (d + 2)))^(1 / (d + 4))`.
    GaussianOptimal,
}

/// Density that divides the prior in the importance ratio of the next update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalDensity {
    /// Gaussian fitted to the weighted belief, inflated by the kernel.
    Gaussian,
    /// Exact kernel mixture the particles were drawn from; `O(n^2)` per update.
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub n_particles: usize,
    pub n_iterations: usize,
    pub jitter: f64,
    pub bandwidth: BandwidthRule,
    pub tempering: Tempering,
    pub proposal: ProposalDensity,
    /// Cap the prior/surrogate importance ratios at `mean * sqrt(n)`.
    pub truncate_ratio: bool,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            n_particles: 10_000,
            n_iterations: 50,
            jitter: 1e-9,
            bandwidth: BandwidthRule::GaussianOptimal,
            tempering: Tempering::Adaptive { target_ess: 0.1 },
            proposal: ProposalDensity::Kernel,
            truncate_ratio: true,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 2 {
            return Err(Error::Config(format!(
                "n_particles must be at least 2, got {}",
                self.n_particles
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config(format!(
                "jitter must be finite and >= 0, got {}",
                self.jitter
            )));
        }
        if let Tempering::Adaptive { target_ess } = self.tempering {
            if !(target_ess > 0.0 && target_ess <= 1.0) {
                return Err(Error::Config(format!(
                    "tempering target_ess must lie in (0, 1], got {target_ess}"
                )));
            }
        }
        Ok(())
    }

    pub fn kernel_bandwidth(&self) -> f64 {
        match self.bandwidth {
            BandwidthRule::GaussianOptimal => kernel_bandwidth(self.n_particles, crate::STATE_DIM),
        }
    }
}

/// One aperture as seen by the estimator. Anchors carry their known state,
/// agents their prior box.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Anchor(ApertureState),
    Agent(Bounds),
}

impl Node {
    pub fn role(&self) -> Role {
        match self {
            Node::Anchor(_) => Role::Anchor,
            Node::Agent(_) => Role::Agent,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    /// Index of the aperture in the node list.
    pub aperture: usize,
    pub summary: BeliefSummary,
    pub beta: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    pub agents: Vec<AgentRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub aperture: usize,
    pub iteration: usize,
    pub reason: String,
}

impl From<Divergence> for Error {
    fn from(d: Divergence) -> Self {
        Error::Divergence {
            aperture: d.aperture,
            iteration: d.iteration,
            reason: d.reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BpTrace {
    pub iterations: Vec<IterationRecord>,
    /// Set when the run stopped early; `iterations` then holds the partial trace.
    pub divergence: Option<Divergence>,
    /// Particle sets of all apertures after the last completed iteration.
    pub sets: Vec<ParticleSet>,
}

impl BpTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }
}

/// Ordered pairs `(rx, tx)` whose observation involves aperture `j`.
pub fn neighbor_pairs(j: usize, n_apertures: usize) -> Vec<(usize, usize)> {
    (0..n_apertures)
        .filter(|&k| k != j)
        .flat_map(|k| [(j, k), (k, j)])
        .collect()
}

/// Initial particle sets: point masses at anchors, uniform boxes for agents.
/// Agent `j` draws from substream `(seed, 0, j)`.
pub fn init_particles(nodes: &[Node], n: usize, seed: u64) -> Vec<ParticleSet> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, node)| match node {
            Node::Anchor(s) => ParticleSet::anchor(s, n),
            Node::Agent(b) => ParticleSet::uniform(b, n, &mut substream(seed, &[0, j as u64])),
        })
        .collect()
}

struct AgentState {
    /// `None` until the first update: the initial draws come from the prior.
    surrogate: Option<Surrogate>,
    beta: f64,
}

/// Runs `config.n_iterations` iterations of loopy BP.
///
/// Configuration problems (invalid nodes, missing observations) are errors.
/// Numerical breakdown during the iterations is reported through
/// [`BpTrace::divergence`] together with the iterations completed so far.
pub fn run_loopy_bp(
    nodes: &[Node],
    observations: &[ChannelObservation],
    cfg: &ArrayConfig,
    config: &BpConfig,
    seed: u64,
) -> Result<BpTrace> {
    config.validate()?;
    cfg.validate()?;
    let j_total = nodes.len();
    for node in nodes {
        match node {
            Node::Anchor(s) => s.validate()?,
            Node::Agent(b) => b.validate()?,
        }
    }
    let mut pairs: HashMap<(usize, usize), PairLikelihood> = HashMap::new();
    for obs in observations {
        if obs.rx_id >= j_total || obs.tx_id >= j_total || obs.rx_id == obs.tx_id {
            return Err(Error::Config(format!(
                "observation ({}, {}) does not name two distinct apertures",
                obs.rx_id, obs.tx_id
            )));
        }
        pairs.insert(
            (obs.rx_id, obs.tx_id),
            PairLikelihood::new(obs.values.clone(), cfg)?,
        );
    }
    let agents: Vec<usize> = (0..j_total)
        .filter(|&j| nodes[j].role() == Role::Agent)
        .collect();
    let mut active: Vec<(usize, usize)> = Vec::new();
    for &j in &agents {
        for key in neighbor_pairs(j, j_total) {
            if !pairs.contains_key(&key) {
                return Err(Error::Config(format!(
                    "missing observation for pair {key:?}"
                )));
            }
            if !active.contains(&key) {
                active.push(key);
            }
        }
    }
    active.sort_unstable();

    let n = config.n_particles;
    let mut sets = init_particles(nodes, n, seed);
    let mut states: HashMap<usize, AgentState> = agents
        .iter()
        .map(|&j| {
            (
                j,
                AgentState {
                    surrogate: None,
                    beta: 0.0,
                },
            )
        })
        .collect();

    let mut trace = BpTrace::default();
    if agents.is_empty() {
        trace.sets = sets;
        return Ok(trace);
    }
    for p in 1..=config.n_iterations {
        let mut log_weights: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
        for &(rx, tx) in &active {
            match pair_log_weights(&pairs[&(rx, tx)], &sets[rx], &sets[tx], cfg) {
                Ok(lw) => {
                    log_weights.insert((rx, tx), lw);
                }
                Err(Error::NumericalFault(reason)) => {
                    let aperture = if nodes[rx].role() == Role::Agent {
                        rx
                    } else {
                        tx
                    };
                    let reason = format!("pair ({rx}, {tx}): {reason}");
                    trace.divergence = Some(Divergence {
                        aperture,
                        iteration: p,
                        reason,
                    });
                    trace.sets = sets;
                    return Ok(trace);
                }
                Err(e) => return Err(e),
            }
        }

        let mut record = IterationRecord {
            iteration: p,
            agents: Vec::with_capacity(agents.len()),
        };
        let mut new_sets = Vec::with_capacity(agents.len());
        for &j in &agents {
            let incident: Vec<&[f64]> = neighbor_pairs(j, j_total)
                .iter()
                .map(|key| log_weights[key].as_slice())
                .collect();
            let Node::Agent(bounds) = &nodes[j] else {
                unreachable!()
            };
            let state = &states[&j];
            let mut rng = substream(seed, &[1, p as u64, j as u64]);
            let up = match agent_update(
                &sets[j],
                &incident,
                bounds,
                state.surrogate.as_ref(),
                config,
                state.beta,
                &mut rng,
            ) {
                Ok(up) => up,
                Err(Error::NumericalFault(reason)) => {
                    trace.divergence = Some(Divergence {
                        aperture: j,
                        iteration: p,
                        reason,
                    });
                    trace.sets = sets;
                    return Ok(trace);
                }
                Err(e) => return Err(e),
            };
            record.agents.push(AgentRecord {
                aperture: j,
                summary: up.summary,
                beta: up.beta,
                ess: up.ess,
            });
            states.insert(
                j,
                AgentState {
                    surrogate: Some(up.surrogate),
                    beta: up.beta,
                },
            );
            new_sets.push((j, up.set));
        }
        for (j, set) in new_sets {
            sets[j] = set;
        }
        trace.iterations.push(record);
    }
    trace.sets = sets;
    Ok(trace)
}
