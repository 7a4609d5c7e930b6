use std::path::PathBuf;
use std::process::ExitCode;

use atacom_harness::battery::{run_all, run_criterion, CRITERIA};
use atacom_harness::config::ExperimentConfig;
use atacom_harness::output::{
    return_points, trajectory_points, write_episode_csv, write_json, write_plot_data,
};
use atacom_harness::runner::{run_experiment, with_threads};
use atacom_harness::sweep::sweep;
use atacom_harness::{HarnessError, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "atacom", version, about = "Run, sweep and verify safe-action experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the episodes of one config.
    Run(Common),
    /// Run the Cartesian grid given by the config's `[[sweep]]` axes.
    Sweep(Common),
    /// Run the acceptance battery; exits with 3 if any criterion fails.
    Verify {
        /// Only these criteria (1-12).
        #[arg(long = "criterion")]
        criteria: Vec<usize>,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Write (x, y, series) plot data: per-episode return, one series per
    /// sweep cell.
    EmitPlots(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let out = cfg.output_dir.clone();
    Ok((cfg, out))
}

fn run(common: &Common) -> Result<i32> {
    let (cfg, out) = load(common)?;
    let keep = cfg.write_episodes;
    let result = with_threads(common.parallel, || run_experiment(&cfg, keep))??;
    write_json(&out.join("summary.json"), &result.summary)?;
    if keep {
        for e in &result.episodes {
            write_episode_csv(&out.join(format!("episodes/episode_{:06}.csv", e.seed)), &e.records)?;
        }
        let traces: Vec<(u64, &[_])> = result
            .episodes
            .iter()
            .map(|e| (e.seed, e.records.as_slice()))
            .collect();
        write_plot_data(&out.join("trajectories.csv"), &trajectory_points(&traces))?;
    }
    println!("{}", result.summary.to_json());
    Ok(if result.summary.faults > 0 { 2 } else { 0 })
}

fn run_sweep(common: &Common, plots_only: bool) -> Result<i32> {
    let (cfg, out) = load(common)?;
    let axes = cfg.sweep.clone();
    let cells = with_threads(common.parallel, || sweep(&cfg, &axes))??;
    write_plot_data(&out.join("plot_data.csv"), &return_points(&cells))?;
    if !plots_only {
        write_json(&out.join("sweep.json"), &cells)?;
        for c in &cells {
            println!(
                "{:<60} success {:.3} return {:8.3} max k {:.3e}",
                c.label, c.summary.success_rate, c.summary.mean_return, c.summary.max_violation
            );
        }
    }
    let faults: usize = cells.iter().map(|c| c.summary.faults).sum();
    Ok(if faults > 0 { 2 } else { 0 })
}

fn verify(criteria: &[usize], parallel: Option<usize>) -> Result<i32> {
    for &id in criteria {
        if id == 0 || id > CRITERIA.len() {
            return Err(HarnessError::Validation(format!(
                "--criterion: {id} is not in 1..={}",
                CRITERIA.len()
            )));
        }
    }
    let results = with_threads(parallel, || {
        if criteria.is_empty() {
            run_all()
        } else {
            criteria.iter().filter_map(|&id| run_criterion(id)).collect()
        }
    })?;
    for r in &results {
        println!("{}", r.line());
    }
    Ok(if results.iter().all(|r| r.passed) { 0 } else { 3 })
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(c) => run(&c),
        Command::Sweep(c) => run_sweep(&c, false),
        Command::EmitPlots(c) => run_sweep(&c, true),
        Command::Verify { criteria, parallel } => verify(&criteria, parallel),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

