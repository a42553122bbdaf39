//! End-to-end runs and sweeps, and their on-disk artifacts.
//!
//! A run directory holds `record.json`, `pattern.csv` and `trace.csv`. A sweep
//! directory holds one run directory per point under `runs/`, plus
//! `summary.csv` and `aggregate.csv`. CSV files contain no timing data except
//! the `runtime_s` column of the sweep summary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::altmin::{design_transmit_beam, BeamDesign, DesignStatus};
use crate::config::{ScenarioConfig, SweepConfig};
use crate::error::{Error, Result};
use crate::exec::{map_batch, Execution};
use crate::factorize::{factorize, HybridFactors};
use crate::metrics::{evaluate, EvaluationReport};
use crate::model::{generate_channels, stage_rng, RngStage, Scenario};
use crate::pattern::PatternSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Coarse outcome of a run, mapped onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Infeasible,
    NumericalFailure,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Infeasible => 3,
            RunStatus::NumericalFailure => 4,
        }
    }

    fn from_design(status: DesignStatus) -> Self {
        match status {
            DesignStatus::Infeasible => RunStatus::Infeasible,
            DesignStatus::Failed => RunStatus::NumericalFailure,
            _ => RunStatus::Ok,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub channels_s: f64,
    pub design_s: f64,
    pub factorize_s: f64,
    pub evaluate_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationSummary {
    pub residual_trace: Vec<f64>,
    pub regularized: bool,
    pub degenerate: bool,
}

/// Self-contained description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub status: RunStatus,
    pub design_status: DesignStatus,
    pub design_trace: Vec<f64>,
    pub solver_iterations: Vec<u32>,
    pub factorization: Option<FactorizationSummary>,
    pub report: Option<EvaluationReport>,
    pub timings: Timings,
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: Scenario,
    pub pattern: PatternSpec,
    pub design: BeamDesign,
    pub factors: Option<HybridFactors>,
    pub record: RunRecord,
}

impl RunResult {
    pub fn status(&self) -> RunStatus {
        self.record.status
    }
}

/// Run design, factorization and evaluation for one configuration.
pub fn execute(config: &ScenarioConfig) -> Result<RunResult> {
    let start = Instant::now();
    let scenario = config.scenario()?;
    let mut timings = Timings::default();

    let t = Instant::now();
    let channels = generate_channels(&scenario, &mut stage_rng(config.seed, RngStage::Channels));
    let pattern = PatternSpec::new(&scenario)?;
    timings.channels_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let design = design_transmit_beam(
        &scenario,
        &channels,
        &pattern,
        &config.design_stop,
        &config.solver,
        &mut stage_rng(config.seed, RngStage::PhaseInit),
    )?;
    timings.design_s = t.elapsed().as_secs_f64();

    let (factors, report) = if design.status.has_design() {
        let t = Instant::now();
        let factors = factorize(
            &design.beams,
            scenario.p_t,
            &config.factorization_stop,
            &config.manifold,
            &mut stage_rng(config.seed, RngStage::AnalogInit),
        )?;
        timings.factorize_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let report = evaluate(&design, &factors, &channels, &pattern, &scenario)?;
        timings.evaluate_s = t.elapsed().as_secs_f64();
        (Some(factors), Some(report))
    } else {
        (None, None)
    };
    timings.total_s = start.elapsed().as_secs_f64();

    let record = RunRecord {
        version: VERSION.to_string(),
        seed: config.seed,
        config_hash: config.hash(),
        config: config.clone(),
        status: RunStatus::from_design(design.status),
        design_status: design.status,
        design_trace: design.trace.clone(),
        solver_iterations: design.solver_iterations.clone(),
        factorization: factors.as_ref().map(|f| FactorizationSummary {
            residual_trace: f.residual_trace.clone(),
            regularized: f.regularized,
            degenerate: f.degenerate,
        }),
        report,
        timings,
    };
    Ok(RunResult {
        scenario,
        pattern,
        design,
        factors,
        record,
    })
}

#[derive(Serialize)]
struct PatternRow<'a> {
    angle_deg: f64,
    #[serde(rename = "objective_dBi")]
    objective_dbi: f64,
    #[serde(rename = "dtb_dBi")]
    dtb_dbi: f64,
    #[serde(rename = "dtb_hbf_dBi")]
    dtb_hbf_dbi: f64,
    seed: u64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    stage: &'a str,
    iteration: usize,
    value: f64,
    seed: u64,
    config_hash: &'a str,
}

/// Write `record.json`, `pattern.csv` and `trace.csv` into `dir`. The pattern
/// table is only written when a design exists.
pub fn write_run(dir: &Path, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let record = &result.record;
    fs::write(dir.join("record.json"), serde_json::to_string_pretty(record)? + "\n")?;

    let hash = record.config_hash.as_str();
    let pattern_path = dir.join("pattern.csv");
    match &record.report {
        Some(report) => {
            let mut w = csv::Writer::from_path(&pattern_path)?;
            let c = &report.pattern;
            for m in 0..c.angle_deg.len() {
                w.serialize(PatternRow {
                    angle_deg: c.angle_deg[m],
                    objective_dbi: c.objective_dbi[m],
                    dtb_dbi: c.dtb_dbi[m],
                    dtb_hbf_dbi: c.dtb_hbf_dbi[m],
                    seed: record.seed,
                    config_hash: hash,
                })?;
            }
            w.flush()?;
        }
        None if pattern_path.exists() => fs::remove_file(&pattern_path)?,
        None => {}
    }

    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join("trace.csv"))?;
    w.write_record(["stage", "iteration", "value", "seed", "config_hash"])?;
    let residuals = record.factorization.as_ref().map(|f| f.residual_trace.as_slice()).unwrap_or(&[]);
    for (stage, values) in [("design", record.design_trace.as_slice()), ("factorization", residuals)] {
        for (i, &value) in values.iter().enumerate() {
            w.serialize(TraceRow {
                stage,
                iteration: i + 1,
                value,
                seed: record.seed,
                config_hash: hash,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Execute one configuration and write its artifacts.
pub fn run_single(config: &ScenarioConfig, out_dir: &Path) -> Result<RunResult> {
    let result = execute(config)?;
    write_run(out_dir, &result)?;
    Ok(result)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub gamma_db: f64,
    pub n_bs: usize,
    pub seed: u64,
    pub mse_no_hbf: Option<f64>,
    pub mse_hbf: Option<f64>,
    pub min_user_sinr_db: Option<f64>,
    pub iterations: usize,
    pub runtime_s: f64,
    pub status: String,
    pub config_hash: String,
}

/// One row of `aggregate.csv`: medians over the seeds that produced a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub gamma_db: f64,
    pub n_bs: usize,
    pub runs: usize,
    pub designed: usize,
    pub median_mse_no_hbf: Option<f64>,
    pub median_mse_hbf: Option<f64>,
    pub median_min_user_sinr_db: Option<f64>,
    pub median_iterations: Option<f64>,
    pub seeds: String,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub summary: Vec<SummaryRow>,
    pub aggregate: Vec<AggregateRow>,
}

/// Median of a nonempty sample; the mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

fn point_dir(root: &Path, gamma_db: f64, n_bs: usize, seed: u64) -> PathBuf {
    root.join("runs").join(format!("gamma{gamma_db}_nbs{n_bs}_seed{seed}"))
}

/// Run every point of the sweep. A failing point becomes a summary row with
/// status `error` and no metrics; the sweep carries on.
pub fn run_sweep(sweep: &SweepConfig, out_dir: &Path, execution: Execution) -> Result<SweepOutcome> {
    sweep.validate()?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("sweep.toml"), sweep.to_toml())?;
    let points = sweep.points();

    let rows: Vec<SummaryRow> = map_batch(&points, execution, |pt| {
        let start = Instant::now();
        let hash = pt.config.hash();
        let outcome = execute(&pt.config).and_then(|r| {
            write_run(&point_dir(out_dir, pt.gamma_db, pt.n_bs, pt.seed), &r)?;
            Ok(r)
        });
        let runtime_s = start.elapsed().as_secs_f64();
        let mut row = SummaryRow {
            gamma_db: pt.gamma_db,
            n_bs: pt.n_bs,
            seed: pt.seed,
            mse_no_hbf: None,
            mse_hbf: None,
            min_user_sinr_db: None,
            iterations: 0,
            runtime_s,
            status: "error".into(),
            config_hash: hash,
        };
        if let Ok(r) = outcome {
            row.iterations = r.design.iterations();
            row.status = serde_json::to_value(r.design.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            if let Some(rep) = &r.record.report {
                row.mse_no_hbf = Some(rep.mse_no_hbf);
                row.mse_hbf = Some(rep.mse_hbf);
                row.min_user_sinr_db = Some(rep.min_user_sinr_db());
            }
        }
        row
    });

    let mut aggregate = Vec::new();
    for &gamma_db in &sweep.gamma_db {
        for &n_bs in &sweep.n_bs {
            let cell: Vec<&SummaryRow> =
                rows.iter().filter(|r| r.gamma_db == gamma_db && r.n_bs == n_bs).collect();
            let designed: Vec<&&SummaryRow> = cell.iter().filter(|r| r.mse_no_hbf.is_some()).collect();
            let collect = |f: fn(&SummaryRow) -> Option<f64>| {
                median(&designed.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            aggregate.push(AggregateRow {
                gamma_db,
                n_bs,
                runs: cell.len(),
                designed: designed.len(),
                median_mse_no_hbf: collect(|r| r.mse_no_hbf),
                median_mse_hbf: collect(|r| r.mse_hbf),
                median_min_user_sinr_db: collect(|r| r.min_user_sinr_db),
                median_iterations: collect(|r| Some(r.iterations as f64)),
                seeds: cell.iter().map(|r| r.seed.to_string()).collect::<Vec<_>>().join(";"),
                config_hash: sweep.hash(),
            });
        }
    }

    write_table(&out_dir.join("summary.csv"), &rows)?;
    write_table(&out_dir.join("aggregate.csv"), &aggregate)?;
    Ok(SweepOutcome {
        summary: rows,
        aggregate,
    })
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a table written by this module.
pub fn read_table<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
