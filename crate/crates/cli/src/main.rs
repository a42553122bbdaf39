use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hbf_isac::config::{AnyConfig, ScenarioConfig, SweepConfig};
use hbf_isac::exec::Execution;
use hbf_isac::experiment::{run_single, run_sweep, RunStatus};
use hbf_isac::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 4;

/// Hybrid beamforming design for mmWave MIMO sensing and communications.
#[derive(Debug, Parser)]
#[command(name = "hbf-isac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design, factorize and evaluate one scenario.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every point of a sweep over SINR targets, array sizes and seeds.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Parse and validate a scenario or sweep file without running it.
    Validate { config: PathBuf },
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed overriding the one in the config (a sweep then runs only this seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps; 1 runs sequentially.
    #[arg(long)]
    workers: Option<usize>,
    /// Cap on design iterations.
    #[arg(long)]
    max_iters: Option<usize>,
}

impl Common {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.max_iters {
            cfg.design_stop.max_iters = n;
        }
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(if err.is_config_error() { EXIT_CONFIG } else { EXIT_NUMERICAL })
}

fn status_code(status: RunStatus) -> ExitCode {
    ExitCode::from(status.exit_code() as u8)
}

fn run(path: &Path, common: &Common) -> Result<ExitCode, Error> {
    let mut cfg = ScenarioConfig::load(path)?;
    common.apply(&mut cfg);
    cfg.scenario()?;
    let result = run_single(&cfg, &common.out)?;
    let record = &result.record;
    match &record.report {
        Some(r) => println!(
            "{:?}: {} iterations, mse {:.6} (hbf {:.6}), min user SINR {:.2} dB -> {}",
            record.design_status,
            result.design.iterations(),
            r.mse_no_hbf,
            r.mse_hbf,
            r.min_user_sinr_db(),
            common.out.display()
        ),
        None => println!("{:?}: no design, record in {}", record.design_status, common.out.display()),
    }
    Ok(status_code(record.status))
}

fn sweep(path: &Path, common: &Common) -> Result<ExitCode, Error> {
    let mut cfg = SweepConfig::load(path)?;
    common.apply(&mut cfg.base);
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    let execution = Execution::from_workers(common.workers);
    let outcome = run_sweep(&cfg, &common.out, execution)?;
    for row in &outcome.aggregate {
        println!(
            "gamma {} dB, n_bs {}: {}/{} designed, median mse {}",
            row.gamma_db,
            row.n_bs,
            row.designed,
            row.runs,
            row.median_mse_no_hbf.map_or("-".into(), |m| format!("{m:.6}"))
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(path: &Path) -> Result<ExitCode, Error> {
    match AnyConfig::load(path)? {
        AnyConfig::Scenario(c) => println!("scenario ok, hash {}", c.hash()),
        AnyConfig::Sweep(c) => println!("sweep ok, {} points, hash {}", c.points().len(), c.hash()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, common } => run(config, common),
        Command::Sweep { config, common } => sweep(config, common),
        Command::Validate { config } => validate(config),
    };
    result.unwrap_or_else(|e| fail(&e))
}
