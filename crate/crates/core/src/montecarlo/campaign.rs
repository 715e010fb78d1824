use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioConfig;
use crate::bp::{run_loopy_bp, BpTrace, Role};
use crate::channel::synthesize_all_pairs;
use crate::geometry::ApertureState;
use crate::rng::{derive_seed, substream};
use crate::{Error, Result};

/// Errors of one agent's MMSE estimate at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationError {
    pub p: usize,
    pub agent_id: usize,
    pub pos_err_m: f64,
    /// Euclidean norm of the Euler-angle difference, without wrapping.
    pub ori_err_rad: f64,
    pub clk_err_m: f64,
}

impl IterationError {
    pub fn between(p: usize, agent_id: usize, est: &ApertureState, truth: &ApertureState) -> Self {
        Self {
            p,
            agent_id,
            pos_err_m: (est.position - truth.position).norm(),
            ori_err_rad: (est.orientation - truth.orientation).norm(),
            clk_err_m: (est.clock_offset_m - truth.clock_offset_m).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub run_id: usize,
    pub diverged: bool,
    pub errors: Vec<IterationError>,
}

impl RunMetrics {
    pub fn final_iteration(&self) -> Option<usize> {
        self.errors.iter().map(|e| e.p).max()
    }

    pub fn at(&self, p: usize) -> impl Iterator<Item = &IterationError> {
        self.errors.iter().filter(move |e| e.p == p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub p: usize,
    pub agent_id: usize,
    pub rmse_pos_m: f64,
    pub rmse_ori_rad: f64,
    pub rmse_clk_m: f64,
    /// Number of non-diverged runs entering the RMSE.
    pub n_runs: usize,
    pub divergence_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub runs: Vec<RunMetrics>,
    pub aggregate: Vec<AggregateRow>,
    pub divergence_rate: f64,
    pub wall_time_s: f64,
}

/// Converts a BP trace into per-iteration errors and applies the divergence
/// rule: a run diverges when BP stopped early or any agent's final position
/// error exceeds `threshold_m`.
pub fn evaluate_trace(
    run_id: usize,
    trace: &BpTrace,
    cfg: &ScenarioConfig,
    threshold_m: f64,
) -> RunMetrics {
    let mut errors = Vec::new();
    for rec in &trace.iterations {
        for a in &rec.agents {
            let spec = &cfg.apertures[a.aperture];
            errors.push(IterationError::between(
                rec.iteration,
                spec.id,
                &a.summary.state(),
                &spec.truth,
            ));
        }
    }
    let final_bad = trace
        .last()
        .map(|rec| {
            rec.agents.iter().any(|a| {
                let truth = &cfg.apertures[a.aperture].truth;
                !((a.summary.state().position - truth.position).norm() <= threshold_m)
            })
        })
        .unwrap_or(true);
    RunMetrics {
        run_id,
        diverged: trace.divergence.is_some() || final_bad,
        errors,
    }
}

/// One Monte-Carlo run: fresh observation noise from substream
/// `(master_seed, run_id, 0)` and BP draws seeded by `(master_seed, run_id, 1)`.
pub fn run_single(cfg: &ScenarioConfig, run_id: usize) -> Result<(BpTrace, RunMetrics)> {
    let truths = cfg.truths();
    let mut noise_rng = substream(cfg.master_seed, &[run_id as u64, 0]);
    let observations = synthesize_all_pairs(&truths, &cfg.array, cfg.snr_db, &mut noise_rng)?;
    let nodes = cfg.nodes()?;
    let bp_seed = derive_seed(cfg.master_seed, &[run_id as u64, 1]);
    let trace = run_loopy_bp(&nodes, &observations, &cfg.array, &cfg.bp, bp_seed)?;
    let metrics = evaluate_trace(run_id, &trace, cfg, cfg.divergence_threshold_m);
    Ok((trace, metrics))
}

/// Root-mean-square errors per `(p, agent)` over the non-diverged runs.
pub fn aggregate(runs: &[RunMetrics]) -> Vec<AggregateRow> {
    let total = runs.len();
    let good: Vec<&RunMetrics> = runs.iter().filter(|r| !r.diverged).collect();
    let divergence_rate = if total == 0 {
        0.0
    } else {
        (total - good.len()) as f64 / total as f64
    };
    let mut keys: Vec<(usize, usize)> = good
        .iter()
        .flat_map(|r| r.errors.iter().map(|e| (e.p, e.agent_id)))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(p, agent_id)| {
            let (mut sp, mut so, mut sc, mut n) = (0.0, 0.0, 0.0, 0usize);
            for e in good
                .iter()
                .flat_map(|r| r.at(p))
                .filter(|e| e.agent_id == agent_id)
            {
                sp += e.pos_err_m * e.pos_err_m;
                so += e.ori_err_rad * e.ori_err_rad;
                sc += e.clk_err_m * e.clk_err_m;
                n += 1;
            }
            let nf = n as f64;
            AggregateRow {
                p,
                agent_id,
                rmse_pos_m: (sp / nf).sqrt(),
                rmse_ori_rad: (so / nf).sqrt(),
                rmse_clk_m: (sc / nf).sqrt(),
                n_runs: n,
                divergence_rate,
            }
        })
        .collect()
}

pub fn run_campaign(cfg: &ScenarioConfig) -> Result<CampaignResult> {
    run_campaign_with_progress(cfg, |_| {})
}

/// Runs all `cfg.n_runs` runs. `on_done` is called with the run id as each
/// run finishes (in completion order). A run whose BP fails numerically is
/// recorded as diverged; configuration errors abort the campaign.
pub fn run_campaign_with_progress<F>(cfg: &ScenarioConfig, on_done: F) -> Result<CampaignResult>
where
    F: Fn(usize) + Sync,
{
    cfg.validate()?;
    let start = Instant::now();
    let runs: Vec<RunMetrics> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|run_id| {
            let out = match run_single(cfg, run_id) {
                Ok((_, m)) => Ok(m),
                Err(Error::NumericalFault(_)) | Err(Error::Divergence { .. }) => Ok(RunMetrics {
                    run_id,
                    diverged: true,
                    errors: Vec::new(),
                }),
                Err(e) => Err(e),
            };
            on_done(run_id);
            out
        })
        .collect::<Result<_>>()?;
    let aggregate = aggregate(&runs);
    let n_div = runs.iter().filter(|r| r.diverged).count();
    Ok(CampaignResult {
        divergence_rate: n_div as f64 / runs.len() as f64,
        runs,
        aggregate,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Agent ids of the scenario in aperture order.
pub fn agent_ids(cfg: &ScenarioConfig) -> Vec<usize> {
    cfg.apertures
        .iter()
        .filter(|a| a.role == Role::Agent)
        .map(|a| a.id)
        .collect()
}
