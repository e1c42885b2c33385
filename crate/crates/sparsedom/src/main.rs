//! `sparsedom` CLI: scenario runner for the sparse-domination library.
//!
//! Subcommands run either a JSON config (`run <config.json>`) or one of the
//! built-in scenarios. Each run writes `report.json`, `metrics.csv` and,
//! when a construction ran, `trace.jsonl` under `--out DIR/<name>/`, prints
//! one pass/fail line per check, and exits nonzero on failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sparsedom::harness::{default_config, run_scenario, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "sparsedom", version, about = "sparse domination scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory for report.json / metrics.csv / trace.jsonl.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override cost guards on brute-force scans.
    #[arg(long, global = true)]
    force: bool,

    /// Override the averaging mode: dilated | upgraded.
    #[arg(long, global = true)]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a JSON config file.
    Run { config: PathBuf },
    /// Dyadic axiom verification plus adjacent systems and covering checks.
    Axioms,
    /// Hilbert transform A_2 sweep and the pointwise Dini bound.
    A2Demo,
    /// Rademacher maximal operator: sharpness example and sparse bound.
    RmfDemo,
    /// Sparse-operator weighted-norm exponent sweep.
    WeightsSweep,
    /// Riesz potential fractional sparse domination.
    FractionalDemo,
    /// Sparse form domination for the Hilbert scenario.
    FormDemo,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(passed) => {
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> sparsedom::error::Result<bool> {
    let mut cfg: ScenarioConfig = match &cli.command {
        Command::Run { config } => ScenarioConfig::from_json(&fs::read_to_string(config)?)?,
        Command::Axioms => default_config(ScenarioKind::Axioms),
        Command::A2Demo => default_config(ScenarioKind::A2Demo),
        Command::RmfDemo => default_config(ScenarioKind::RmfDemo),
        Command::WeightsSweep => default_config(ScenarioKind::WeightsSweep),
        Command::FractionalDemo => default_config(ScenarioKind::FractionalDemo),
        Command::FormDemo => default_config(ScenarioKind::FormDemo),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &cli.mode {
        cfg.params.mode = mode.clone();
    }

    let output = run_scenario(&cfg, cli.force)?;
    let dir = cli.out.join(&cfg.name);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("report.json"), output.report.to_json())?;
    fs::write(dir.join("metrics.csv"), output.report.to_csv())?;
    if let Some(trace) = &output.trace_jsonl {
        fs::write(dir.join("trace.jsonl"), trace)?;
    }

    for check in &output.report.checks {
        println!(
            "[{}] {}: value {:.6e} vs tolerance {:.6e} — {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.value,
            check.tolerance,
            check.detail
        );
    }
    println!(
        "{}: {} checks, {} — report at {}",
        cfg.name,
        output.report.checks.len(),
        if output.report.passed { "all passed" } else { "FAILURES" },
        dir.join("report.json").display()
    );
    Ok(output.report.passed)
}
