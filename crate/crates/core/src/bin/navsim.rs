//! `navsim`: runs navigation scenarios and checks input files.
//!
//! Exit codes: 0 on success, 1 when a run collides or fails, 2 on bad input.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use navcore::app::{load_map, run_scenario, AppError, RunOptions, ScenarioConfig};
use navcore::bt::{ActionRegistry, TreeSpec};
use navcore::grid::Occupancy;

#[derive(Parser)]
#[command(name = "navsim", version, about = "2D navigation stack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to completion and report the outcome.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Behavior tree XML replacing the scenario's tree.
        #[arg(long)]
        bt: Option<PathBuf>,
        /// Metrics CSV output.
        #[arg(long)]
        log: Option<PathBuf>,
        /// JSON report output.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory receiving the final global and local costmaps as PGM.
        #[arg(long)]
        dump_costmaps: Option<PathBuf>,
        /// Stop after this many simulated seconds.
        #[arg(long)]
        max_sim_time: Option<f64>,
        /// Per-tick pose trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Load a map and print its dimensions and cell counts.
    CheckMap { pgm: PathBuf, meta: PathBuf },
    /// Parse a behavior tree against the navigation node registry.
    ValidateBt { xml: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, AppError> {
    match cmd {
        Command::Run { scenario, seed, bt, log, report, dump_costmaps, max_sim_time, trace } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            if let Some(t) = max_sim_time {
                if !(t > 0.0) {
                    return Err(AppError::Config(format!("--max-sim-time must be > 0, got {t}")));
                }
            }
            let opts = RunOptions { bt, max_sim_time, seed, trace: trace.is_some(), ..Default::default() };
            let out = run_scenario(&cfg, opts)?;
            let io = |p: &PathBuf, e: std::io::Error| AppError::Io(format!("{}: {e}", p.display()));
            if let Some(p) = &log {
                std::fs::write(p, out.csv()).map_err(|e| io(p, e))?;
            }
            if let Some(p) = &report {
                std::fs::write(p, out.report_json()).map_err(|e| io(p, e))?;
            }
            if let Some(dir) = &dump_costmaps {
                std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
                out.write_costmaps(dir)?;
            }
            if let Some(p) = &trace {
                out.write_trace(p)?;
            }
            println!("{}", out.report.summary());
            println!("wall clock      {:.1} s", out.wall_clock_s);
            Ok(if out.report.passed() { 0 } else { 1 })
        }
        Command::CheckMap { pgm, meta } => {
            let grid = load_map(&pgm, &meta)?;
            let count = |v| grid.cells.iter().filter(|&&c| c == v).count();
            let m = &grid.meta;
            println!("size        {} x {} cells", m.width, m.height);
            println!("resolution  {} m", m.resolution);
            println!("origin      ({}, {})", m.origin.x, m.origin.y);
            println!("extent      {:.2} x {:.2} m", m.width as f64 * m.resolution, m.height as f64 * m.resolution);
            println!(
                "cells       {} free, {} occupied, {} unknown",
                count(Occupancy::Free),
                count(Occupancy::Occupied),
                count(Occupancy::Unknown)
            );
            Ok(0)
        }
        Command::ValidateBt { xml } => {
            let spec = TreeSpec::load(&xml, &ActionRegistry::navigation()).map_err(|e| AppError::Config(e.to_string()))?;
            println!("{}: ok ({} nodes)", xml.display(), spec.node_count());
            Ok(0)
        }
    }
}
