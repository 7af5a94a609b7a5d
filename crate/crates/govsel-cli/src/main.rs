//! Command-line front end for the evaluation harness: run the grid,
//! aggregate and report metrics, verify audit logs, and record operator
//! breaker resets.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use govsel::config::{parse_attack, AblationId, GridConfig};
use govsel::domain::ScenarioId;
use govsel::harness::{write_grid, Cell, ExecOptions};
use govsel::metrics::group_rows;
use govsel::record::{parse_log, write_log, LogLine, ResetRecord};
use govsel::report::{aggregates_from_dir, render_text_table, write_report};
use govsel::verify::verify_dir;

#[derive(Parser)]
#[command(name = "govsel", about = "Selection-governance evaluation harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GridArgs {
    /// Scenario filter (repeatable), e.g. fraud_detection
    #[arg(long)]
    scenario: Vec<String>,
    /// Ablation filter (repeatable), e.g. B0
    #[arg(long)]
    ablation: Vec<String>,
    /// Attack filter (repeatable), e.g. A1 or NONE
    #[arg(long)]
    attack: Vec<String>,
    /// Master seed; every run derives deterministically from it
    #[arg(long)]
    seed: Option<u64>,
    /// Runs per (cell, task)
    #[arg(long)]
    runs_per_task: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the (filtered) grid and write JSONL logs plus a manifest
    Run {
        #[command(flatten)]
        grid: GridArgs,
        /// Output directory for logs
        #[arg(long, default_value = "logs")]
        out: PathBuf,
        /// Overwrite existing logs
        #[arg(long)]
        force: bool,
        /// Worker threads (default: available cores)
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print grouped metric tables from existing logs
    Aggregate {
        /// Log directory
        #[arg(long, default_value = "logs")]
        logs: PathBuf,
        #[arg(long, value_enum, default_value_t = GroupBy::Ablation)]
        group_by: GroupBy,
    },
    /// Emit the eight standard tables as text + CSV
    Report {
        #[arg(long, default_value = "logs")]
        logs: PathBuf,
        /// Report output directory
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Re-check every record: digests, commitments, event ordering
    Verify {
        #[arg(long, default_value = "logs")]
        logs: PathBuf,
    },
    /// Record a human-review breaker reset for one cell
    BreakerReset {
        #[arg(long, default_value = "logs")]
        logs: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        ablation: String,
        #[arg(long)]
        attack: String,
        /// Operator note stored in the audit event
        #[arg(long, default_value = "reviewed and cleared")]
        note: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupBy {
    Ablation,
    Attack,
    Cell,
}

/// Base config comes from GOVSEL_CONFIG when set, then CLI filters narrow it.
fn resolve_config(grid: &GridArgs) -> anyhow::Result<GridConfig> {
    let mut cfg = match std::env::var_os("GOVSEL_CONFIG") {
        Some(path) => {
            let path = PathBuf::from(path);
            GridConfig::load(&path).with_context(|| format!("loading {}", path.display()))?
        }
        None => GridConfig::default(),
    };
    if !grid.scenario.is_empty() {
        cfg.scenarios = grid
            .scenario
            .iter()
            .map(|s| ScenarioId::parse(s))
            .collect::<Result<_, _>>()?;
    }
    if !grid.ablation.is_empty() {
        cfg.ablations = grid
            .ablation
            .iter()
            .map(|s| AblationId::parse(s))
            .collect::<Result<_, _>>()?;
    }
    if !grid.attack.is_empty() {
        cfg.attacks =
            grid.attack.iter().map(|s| parse_attack(s)).collect::<Result<_, _>>()?;
    }
    if let Some(seed) = grid.seed {
        cfg.master_seed = seed;
    }
    if let Some(runs) = grid.runs_per_task {
        cfg.runs_per_task = runs;
    }
    Ok(cfg)
}

fn cmd_run(
    grid: &GridArgs,
    out: &Path,
    force: bool,
    jobs: Option<usize>,
) -> anyhow::Result<ExitCode> {
    let cfg = match resolve_config(grid) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("config error: {err:#}");
            return Ok(ExitCode::from(1));
        }
    };
    if let Some(jobs) = jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().ok();
    }
    match write_grid(&cfg, out, &ExecOptions::default(), force) {
        Ok(manifest) => {
            println!(
                "wrote {} runs across {} cells to {} (seed {}, config digest {})",
                manifest.total_runs,
                manifest.cells,
                out.display(),
                manifest.master_seed,
                &manifest.config_digest[..12],
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(err @ govsel::harness::HarnessError::WouldOverwrite(_)) => {
            eprintln!("{err}");
            Ok(ExitCode::from(1))
        }
        Err(err) => {
            eprintln!("internal fault: {err}");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_aggregate(logs: &Path, group_by: GroupBy) -> anyhow::Result<ExitCode> {
    let cells = match aggregates_from_dir(logs) {
        Ok(cells) => cells,
        Err(err) => {
            eprintln!("{err}");
            return Ok(ExitCode::from(1));
        }
    };
    let (title, rows) = match group_by {
        GroupBy::Ablation => {
            ("Mean metrics by ablation", group_rows(&cells, |c| c.ablation.clone()))
        }
        GroupBy::Attack => ("Mean metrics by attack", group_rows(&cells, |c| c.attack.clone())),
        GroupBy::Cell => (
            "Metrics by cell",
            group_rows(&cells, |c| format!("{}/{}/{}", c.scenario, c.ablation, c.attack)),
        ),
    };
    print!("{}", render_text_table(title, &rows));
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(logs: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let cells = match aggregates_from_dir(logs) {
        Ok(cells) => cells,
        Err(err) => {
            eprintln!("{err}");
            return Ok(ExitCode::from(1));
        }
    };
    let written = write_report(&cells, out)?;
    for path in written {
        println!("wrote {path}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(logs: &Path) -> anyhow::Result<ExitCode> {
    match verify_dir(logs) {
        Ok(count) => {
            println!("verified {count} records: all checks passed");
            Ok(ExitCode::SUCCESS)
        }
        Err(err) => {
            eprintln!("verification failed: {err}");
            Ok(ExitCode::from(3))
        }
    }
}

fn cmd_breaker_reset(
    logs: &Path,
    scenario: &str,
    ablation: &str,
    attack: &str,
    note: &str,
) -> anyhow::Result<ExitCode> {
    let cell = Cell {
        scenario: ScenarioId::parse(scenario)?,
        ablation: AblationId::parse(ablation)?,
        attack: parse_attack(attack)?,
    };
    let path = logs.join(cell.file_name());
    if !path.exists() {
        eprintln!("no log for cell {} at {}", cell.id(), path.display());
        return Ok(ExitCode::from(1));
    }
    let mut lines = parse_log(&path)?;
    lines.push(LogLine::BreakerReset(ResetRecord::new(scenario, ablation, attack, note)));
    write_log(&path, &lines)?;
    println!("recorded breaker reset for {}", cell.id());
    Ok(ExitCode::SUCCESS)
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { grid, out, force, jobs } => cmd_run(grid, out, *force, *jobs),
        Command::Aggregate { logs, group_by } => cmd_aggregate(logs, *group_by),
        Command::Report { logs, out } => cmd_report(logs, out),
        Command::Verify { logs } => cmd_verify(logs),
        Command::BreakerReset { logs, scenario, ablation, attack, note } => {
            cmd_breaker_reset(logs, scenario, ablation, attack, note)
        }
    }
}
