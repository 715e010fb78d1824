use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use apsync::bp::kernel_bandwidth;
use apsync::montecarlo::{
    agent_ids, default_scenario, error_cdf, read_runs_csv, run_campaign_with_progress,
    write_campaign, write_cdf_csv, ScenarioConfig, RUNS_CSV,
};
use apsync::{Error, STATE_DIM};

/// Monte-Carlo simulator for joint localization, orientation and clock
/// synchronization of distributed apertures.
#[derive(Debug, Parser)]
#[command(name = "apsync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the default scenario (with any overrides) as TOML.
    GenerateConfig {
        /// Destination file; standard output when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a campaign and write runs.csv, aggregate.csv and summary.json.
    Run {
        /// Scenario file; the built-in default scenario when omitted.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Turn a per-run CSV into empirical error CDFs.
    Cdf {
        /// Per-run CSV; defaults to DIR/runs.csv.
        #[arg(long, value_name = "PATH")]
        runs: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Iteration to evaluate; the last recorded one when omitted.
        #[arg(long, value_name = "P")]
        iteration: Option<usize>,
    },
    /// Print derived quantities of a scenario.
    Info {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, value_name = "INT")]
    n_runs: Option<usize>,
    #[arg(long, value_name = "INT")]
    n_particles: Option<usize>,
    #[arg(long, value_name = "INT")]
    iterations: Option<usize>,
    #[arg(long, value_name = "FLOAT", allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    #[arg(long, value_name = "FLOAT")]
    divergence_threshold_m: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ScenarioConfig) -> apsync::Result<()> {
        if let Some(v) = self.n_runs {
            cfg.n_runs = v;
        }
        if let Some(v) = self.n_particles {
            cfg.bp.n_particles = v;
        }
        if let Some(v) = self.iterations {
            cfg.bp.n_iterations = v;
        }
        if let Some(v) = self.snr_db {
            cfg.snr_db = v;
        }
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.divergence_threshold_m {
            cfg.divergence_threshold_m = v;
        }
        cfg.validate()
    }
}

fn load(config: Option<&Path>, overrides: &Overrides) -> Result<ScenarioConfig> {
    let mut cfg = match config {
        Some(path) => ScenarioConfig::load(path)
            .with_context(|| format!("loading scenario {}", path.display()))?,
        None => default_scenario(),
    };
    overrides.apply(&mut cfg).context("applying overrides")?;
    Ok(cfg)
}

fn generate_config(out: Option<&Path>, overrides: &Overrides) -> Result<()> {
    let cfg = load(None, overrides)?;
    match out {
        Some(path) => cfg.save(path)?,
        None => print!("{}", cfg.to_toml_string()?),
    }
    Ok(())
}

fn run(config: Option<&Path>, out: &Path, overrides: &Overrides) -> Result<()> {
    let cfg = load(config, overrides)?;
    let total = cfg.n_runs;
    let done = AtomicUsize::new(0);
    eprintln!(
        "running {total} runs: {} particles, {} iterations, {} dB",
        cfg.bp.n_particles, cfg.bp.n_iterations, cfg.snr_db
    );
    let result = run_campaign_with_progress(&cfg, |run_id| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!("run {run_id} done ({k}/{total})");
    })?;
    write_campaign(out, &result)?;
    cfg.save(&out.join("scenario.toml"))?;
    eprintln!(
        "{} of {total} runs diverged; wrote {} in {:.1}s",
        result.runs.iter().filter(|r| r.diverged).count(),
        out.display(),
        result.wall_time_s
    );
    Ok(())
}

fn cdf(runs: Option<&Path>, out: &Path, iteration: Option<usize>) -> Result<()> {
    let path = runs
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join(RUNS_CSV));
    let metrics = read_runs_csv(&path).with_context(|| format!("reading {}", path.display()))?;
    let p = match iteration {
        Some(p) => p,
        None => metrics
            .iter()
            .filter(|r| !r.diverged)
            .filter_map(|r| r.final_iteration())
            .max()
            .ok_or(Error::NoConvergedRuns)?,
    };
    let series = error_cdf(&metrics, p)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let dest = out.join(format!("cdf_p{p}.csv"));
    write_cdf_csv(&dest, &series)?;
    eprintln!("wrote {} ({} series)", dest.display(), series.len());
    Ok(())
}

fn info(config: Option<&Path>, overrides: &Overrides) -> Result<()> {
    let cfg = load(config, overrides)?;
    let n_s = cfg.bp.n_particles;
    let mut out = std::io::stdout().lock();
    writeln!(out, "N = {}", cfg.array.n_channel())?;
    writeln!(out, "N_f = {}", cfg.array.n_freqs())?;
    writeln!(
        out,
        "N_y x N_z = {} x {}",
        cfg.array.pos_y.len(),
        cfg.array.pos_z.len()
    )?;
    writeln!(out, "lambda = {:.6} m", cfg.array.wavelength)?;
    writeln!(out, "N_s = {n_s}")?;
    writeln!(out, "h_opt = {:.6}", kernel_bandwidth(n_s, STATE_DIM))?;
    writeln!(out, "P = {}", cfg.bp.n_iterations)?;
    writeln!(out, "apertures = {}", cfg.apertures.len())?;
    writeln!(out, "agents = {:?}", agent_ids(&cfg))?;
    writeln!(out, "runs = {}", cfg.n_runs)?;
    writeln!(out, "snr_db = {}", cfg.snr_db)?;
    Ok(())
}

/// Exit status by failure class: 3 for invalid configuration or input files,
/// 4 for I/O problems, 1 otherwise. Usage errors exit with 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Config(_) | Error::ScenarioParse(_) | Error::Csv(_) | Error::NoConvergedRuns,
        ) => 3,
        Some(Error::Io { .. }) => 4,
        _ if err.downcast_ref::<std::io::Error>().is_some() => 4,
        _ => 1,
    }
}

/// Context chain down to the first library error, whose message already
/// includes its cause.
fn describe(err: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for cause in err.chain() {
        parts.push(cause.to_string());
        if cause.downcast_ref::<Error>().is_some() {
            break;
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::GenerateConfig { out, overrides } => generate_config(out.as_deref(), overrides),
        Command::Run {
            config,
            out,
            overrides,
        } => run(config.as_deref(), out, overrides),
        Command::Cdf {
            runs,
            out,
            iteration,
        } => cdf(runs.as_deref(), out, *iteration),
        Command::Info { config, overrides } => info(config.as_deref(), overrides),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
