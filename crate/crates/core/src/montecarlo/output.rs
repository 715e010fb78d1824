use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::campaign::{AggregateRow, CampaignResult, IterationError, RunMetrics};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Position,
    Orientation,
    Clock,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 3] = [
        ErrorKind::Position,
        ErrorKind::Orientation,
        ErrorKind::Clock,
    ];

    pub fn of(self, e: &IterationError) -> f64 {
        match self {
            ErrorKind::Position => e.pos_err_m,
            ErrorKind::Orientation => e.ori_err_rad,
            ErrorKind::Clock => e.clk_err_m,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Position => "position",
            ErrorKind::Orientation => "orientation",
            ErrorKind::Clock => "clock",
        }
    }
}

/// Empirical CDF of one error type for one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfSeries {
    pub agent_id: usize,
    pub kind: ErrorKind,
    /// `(error, cumulative frequency)`, sorted by error; the last frequency is 1.
    pub points: Vec<(f64, f64)>,
}

impl CdfSeries {
    /// Smallest error whose cumulative frequency reaches `q`.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        self.points.iter().find(|(_, f)| *f >= q).map(|(e, _)| *e)
    }
}

/// Empirical CDFs at iteration `p` over the non-diverged runs, one series per
/// agent and error type.
pub fn error_cdf(runs: &[RunMetrics], p: usize) -> Result<Vec<CdfSeries>> {
    let mut samples: BTreeMap<(usize, ErrorKind), Vec<f64>> = BTreeMap::new();
    for run in runs.iter().filter(|r| !r.diverged) {
        for e in run.at(p) {
            for kind in ErrorKind::ALL {
                samples
                    .entry((e.agent_id, kind))
                    .or_default()
                    .push(kind.of(e));
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::NoConvergedRuns);
    }
    Ok(samples
        .into_iter()
        .map(|((agent_id, kind), mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            let points = v
                .into_iter()
                .enumerate()
                .map(|(i, e)| (e, (i + 1) as f64 / n))
                .collect();
            CdfSeries {
                agent_id,
                kind,
                points,
            }
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct RunRow {
    run_id: usize,
    diverged: bool,
    p: usize,
    agent_id: usize,
    pos_err_m: f64,
    ori_err_rad: f64,
    clk_err_m: f64,
}

/// One row per `(run, p, agent)`. Runs that stopped before their first
/// iteration produce no rows.
pub fn write_runs_csv(path: &Path, runs: &[RunMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for run in runs {
        for e in &run.errors {
            w.serialize(RunRow {
                run_id: run.run_id,
                diverged: run.diverged,
                p: e.p,
                agent_id: e.agent_id,
                pos_err_m: e.pos_err_m,
                ori_err_rad: e.ori_err_rad,
                clk_err_m: e.clk_err_m,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut runs: BTreeMap<usize, RunMetrics> = BTreeMap::new();
    for row in r.deserialize() {
        let row: RunRow = row?;
        let run = runs.entry(row.run_id).or_insert_with(|| RunMetrics {
            run_id: row.run_id,
            diverged: row.diverged,
            errors: Vec::new(),
        });
        run.errors.push(IterationError {
            p: row.p,
            agent_id: row.agent_id,
            pos_err_m: row.pos_err_m,
            ori_err_rad: row.ori_err_rad,
            clk_err_m: row.clk_err_m,
        });
    }
    Ok(runs.into_values().collect())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_cdf_csv(path: &Path, series: &[CdfSeries]) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        agent_id: usize,
        error_type: &'static str,
        error: f64,
        cumulative_frequency: f64,
    }
    let mut w = csv::Writer::from_path(path)?;
    for s in series {
        for &(error, cumulative_frequency) in &s.points {
            w.serialize(Row {
                agent_id: s.agent_id,
                error_type: s.kind.name(),
                error,
                cumulative_frequency,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRmse {
    pub agent_id: usize,
    pub rmse_pos_m: f64,
    pub rmse_ori_rad: f64,
    pub rmse_clk_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_runs: usize,
    pub n_diverged: usize,
    pub divergence_rate: f64,
    pub final_iteration: usize,
    pub final_rmse: Vec<FinalRmse>,
    pub wall_time_s: f64,
}

impl Summary {
    pub fn from_result(result: &CampaignResult) -> Self {
        let final_iteration = result.aggregate.iter().map(|r| r.p).max().unwrap_or(0);
        Self {
            n_runs: result.runs.len(),
            n_diverged: result.runs.iter().filter(|r| r.diverged).count(),
            divergence_rate: result.divergence_rate,
            final_iteration,
            final_rmse: result
                .aggregate
                .iter()
                .filter(|r| r.p == final_iteration)
                .map(|r| FinalRmse {
                    agent_id: r.agent_id,
                    rmse_pos_m: r.rmse_pos_m,
                    rmse_ori_rad: r.rmse_ori_rad,
                    rmse_clk_m: r.rmse_clk_m,
                })
                .collect(),
            wall_time_s: result.wall_time_s,
        }
    }
}

pub fn write_summary_json(path: &Path, summary: &Summary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub const RUNS_CSV: &str = "runs.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Writes `runs.csv`, `aggregate.csv` and `summary.json` into `dir`.
pub fn write_campaign(dir: &Path, result: &CampaignResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_runs_csv(&dir.join(RUNS_CSV), &result.runs)?;
    write_aggregate_csv(&dir.join(AGGREGATE_CSV), &result.aggregate)?;
    write_summary_json(&dir.join(SUMMARY_JSON), &Summary::from_result(result))
}
