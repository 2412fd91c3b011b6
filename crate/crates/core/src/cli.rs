//! Command-line surface: `run`, `sweep` and `validate`.
//!
//! Output files (all CSV with a header row):
//!
//! | file                 | columns                                                        |
//! |----------------------|----------------------------------------------------------------|
//! | `per_uav_errors.csv` | `t_s, uav_id, error_m, condition_true, condition_classified`   |
//! | `fused_errors.csv`   | `t_s, rule, error_m, n_contributors`                           |
//! | `doppler_curves.csv` | `t_s, uav_id, f_d_hat_hz, f_d_true_hz, mode`                   |
//! | `summary.csv`        | `scope, route_avg_error_m, rms_error_m`                        |
//! | `sweep_summary.csv`  | `seed, rule_or_uav, route_avg_error_m`                         |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::channel::max_doppler_hz;
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::{run_simulation, run_sweep, Scope, SimResult, SweepSummary};

pub const THREADS_ENV: &str = "SDF_SIM_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "sdf-sim", version, about = "Cooperative Doppler emitter localization simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write error series and Doppler curves.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one simulation per seed and summarize route-average errors.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Number of seeds.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        /// First seed; defaults to the scenario's seed.
        #[arg(long)]
        base_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub scenario_path: String,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    pub files: Vec<String>,
    pub tool_version: String,
    pub scenario_digest: String,
}

impl RunManifest {
    fn write(&self, out: &Path) -> Result<(), CliError> {
        let path = out.join("manifest.json");
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))
    }
}

/// Worker count from `SDF_SIM_THREADS`; 0 or unset means automatic.
pub fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("{THREADS_ENV}={v:?} is not a non-negative integer"))),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

/// Writes the four CSV files of one run; returns their names.
pub fn write_run_outputs(result: &SimResult, out: &Path) -> Result<Vec<String>, CliError> {
    let scored = &result.windows[result.first_scored_window..];

    let rows = scored
        .iter()
        .flat_map(|step| step.iter())
        .map(|w| {
            vec![
                w.t.to_string(),
                w.uav_id.to_string(),
                fmt_opt(w.error_m),
                w.condition_true.to_string(),
                w.condition_classified.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("per_uav_errors.csv"),
        &["t_s", "uav_id", "error_m", "condition_true", "condition_classified"],
        rows,
    )?;

    let mut rows = Vec::new();
    for (j, t) in result.time_axis.iter().enumerate() {
        for series in [&result.arithmetic, &result.weighted] {
            rows.push(vec![
                t.to_string(),
                series.rules[j].to_string(),
                series.errors[j].to_string(),
                series.n_contributors[j].to_string(),
            ]);
        }
    }
    write_csv(
        &out.join("fused_errors.csv"),
        &["t_s", "rule", "error_m", "n_contributors"],
        rows,
    )?;

    let rows = result
        .windows
        .iter()
        .flat_map(|step| step.iter())
        .map(|w| {
            vec![
                w.t.to_string(),
                w.uav_id.to_string(),
                fmt_opt(w.f_d_hat),
                w.f_d_true.to_string(),
                w.mode.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("doppler_curves.csv"),
        &["t_s", "uav_id", "f_d_hat_hz", "f_d_true_hz", "mode"],
        rows,
    )?;

    let mut rows: Vec<Vec<String>> = result
        .per_uav
        .iter()
        .map(|s| {
            vec![
                Scope::Uav(s.uav_id).to_string(),
                s.route_avg.to_string(),
                s.rms.to_string(),
            ]
        })
        .collect();
    for (scope, series) in [
        (Scope::Arithmetic, &result.arithmetic),
        (Scope::Weighted, &result.weighted),
    ] {
        rows.push(vec![
            scope.to_string(),
            series.route_avg.to_string(),
            series.rms.to_string(),
        ]);
    }
    for (name, env) in [("envelope_min", &result.envelope_min), ("envelope_max", &result.envelope_max)] {
        let avg = env.iter().sum::<f64>() / env.len() as f64;
        let rms = (env.iter().map(|e| e * e).sum::<f64>() / env.len() as f64).sqrt();
        rows.push(vec![name.to_string(), avg.to_string(), rms.to_string()]);
    }
    write_csv(
        &out.join("summary.csv"),
        &["scope", "route_avg_error_m", "rms_error_m"],
        rows,
    )?;

    Ok(vec![
        "per_uav_errors.csv".to_string(),
        "fused_errors.csv".to_string(),
        "doppler_curves.csv".to_string(),
        "summary.csv".to_string(),
    ])
}

pub fn write_sweep_outputs(summary: &SweepSummary, out: &Path) -> Result<Vec<String>, CliError> {
    let mut rows = Vec::new();
    for run in &summary.runs {
        for (scope, value) in &run.route_avg {
            rows.push(vec![run.seed.to_string(), scope.to_string(), value.to_string()]);
        }
        rows.push(vec![
            run.seed.to_string(),
            "improvement_ratio".to_string(),
            run.improvement_ratio.to_string(),
        ]);
    }
    let mut aggregates: Vec<(String, crate::sim::Stats)> = summary
        .per_scope
        .iter()
        .map(|(s, st)| (s.to_string(), *st))
        .collect();
    aggregates.push(("improvement_ratio".to_string(), summary.improvement_ratio));
    for (label, pick) in [
        ("mean", (|s: &crate::sim::Stats| s.mean) as fn(&crate::sim::Stats) -> f64),
        ("std", |s| s.std),
        ("median", |s| s.median),
    ] {
        for (scope, stats) in &aggregates {
            rows.push(vec![label.to_string(), scope.clone(), pick(stats).to_string()]);
        }
    }
    write_csv(
        &out.join("sweep_summary.csv"),
        &["seed", "rule_or_uav", "route_avg_error_m"],
        rows,
    )?;
    Ok(vec!["sweep_summary.csv".to_string()])
}

pub fn cmd_run(scenario_path: &Path, seed: Option<u64>, out: &Path) -> Result<RunManifest, CliError> {
    let scenario = Scenario::load(scenario_path)?;
    let seed = seed.unwrap_or(scenario.seed);
    let result = run_simulation(&scenario, seed).map_err(|e| CliError::Runtime(e.to_string()))?;
    prepare_out(out)?;
    let files = write_run_outputs(&result, out)?;
    let manifest = RunManifest {
        scenario_path: scenario_path.display().to_string(),
        seeds: vec![seed],
        out_dir: out.display().to_string(),
        files,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_digest: result.scenario_digest.clone(),
    };
    manifest.write(out)?;
    Ok(manifest)
}

pub fn cmd_sweep(
    scenario_path: &Path,
    n_seeds: u64,
    base_seed: Option<u64>,
    out: &Path,
) -> Result<RunManifest, CliError> {
    if n_seeds == 0 {
        return Err(CliError::Input("--seeds must be at least 1".to_string()));
    }
    let scenario = Scenario::load(scenario_path)?;
    let base = base_seed.unwrap_or(scenario.seed);
    let seeds: Vec<u64> = (0..n_seeds).map(|i| base.wrapping_add(i)).collect();
    let summary = run_sweep(&scenario, &seeds).map_err(|e| CliError::Runtime(e.to_string()))?;
    prepare_out(out)?;
    let files = write_sweep_outputs(&summary, out)?;
    let manifest = RunManifest {
        scenario_path: scenario_path.display().to_string(),
        seeds,
        out_dir: out.display().to_string(),
        files,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_digest: scenario.digest(),
    };
    manifest.write(out)?;
    Ok(manifest)
}

/// Loads and checks a scenario; returns a report of derived quantities.
pub fn cmd_validate(scenario_path: &Path) -> Result<String, CliError> {
    let scenario = Scenario::load(scenario_path)?;
    let mut report = String::new();
    let (start, end) = scenario.span();
    let _ = writeln!(report, "scenario {} is valid", scenario_path.display());
    let _ = writeln!(report, "digest: {}", scenario.digest());
    let _ = writeln!(
        report,
        "span: {start} s .. {end} s, {} windows of {} s ({} samples)",
        scenario.window_count(),
        scenario.window_duration,
        scenario.samples_per_window()
    );
    let f0 = scenario.emitter.carrier_frequency;
    for uav in &scenario.uavs {
        for (i, seg) in uav.trajectory.iter().enumerate() {
            let _ = writeln!(
                report,
                "uav {} segment {}: v = {} m/s, f_Dmax = {:.3} Hz",
                uav.id,
                i + 1,
                seg.speed,
                max_doppler_hz(f0, seg.speed)
            );
        }
    }
    let max = scenario.max_doppler();
    let _ = writeln!(
        report,
        "nyquist margin: sample_rate / max |DFS| = {:.2} (required >= 4)",
        scenario.sample_rate / max
    );
    Ok(report)
}

/// Dispatches a parsed command line. Returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Run { scenario, seed, out } => cmd_run(&scenario, seed, &out).map(|m| {
            println!("wrote {} files to {}", m.files.len(), m.out_dir);
        }),
        Command::Sweep {
            scenario,
            seeds,
            base_seed,
            out,
        } => cmd_sweep(&scenario, seeds, base_seed, &out).map(|m| {
            println!("wrote {} seeds to {}", m.seeds.len(), m.out_dir);
        }),
        Command::Validate { scenario } => cmd_validate(&scenario).map(|r| print!("{r}")),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
