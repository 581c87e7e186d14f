use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ringfl_harness::{
    estimate_pipeline_makespan, parse_config, report_client_deltas, run_experiment, run_optional_step_ablation, PipelineModel,
    Summary,
};

/// Ring federated learning experiments.
#[derive(Parser)]
#[command(name = "ringfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Run the optional-step ablation for an `li` config.
    Ablate { config: PathBuf },
    /// Per-client accuracy deltas between two summary.json files.
    Delta {
        li_summary: PathBuf,
        isolated_summary: PathBuf,
        /// CSV destination; defaults to deltas.csv next to the first summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Makespan bounds for a pipeline model JSON.
    Pipeline { model: PathBuf },
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_summary(path: &Path) -> anyhow::Result<Summary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a summary", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = parse_config(&config)?;
            let e = run_experiment(&cfg, &config_dir(&config))?;
            println!("{}: mean accuracy {:.4} over {} clients", e.summary.strategy, e.summary.mean_accuracy, e.summary.clients.len());
            for (name, v) in [("probe", e.summary.global.probe), ("stacked", e.summary.global.stacked), ("moe", e.summary.global.moe)] {
                if let Some(v) = v {
                    println!("{name}: {v:.4}");
                }
            }
            println!("outputs in {}", e.config.output_dir.display());
        }
        Command::Ablate { config } => {
            let cfg = parse_config(&config)?;
            let (r, _, _) = run_optional_step_ablation(&cfg, &config_dir(&config))?;
            println!("with optional step:    mean {:.4}", r.with_optional.mean_accuracy);
            println!("without optional step: mean {:.4}", r.without_optional.mean_accuracy);
            println!("difference (with − without): {:+.4}", r.mean_accuracy_difference);
            for (name, d) in [("stacked", r.stacked_difference), ("probe", r.probe_difference), ("moe", r.moe_difference)] {
                if let Some(d) = d {
                    println!("{name} difference: {d:+.4}");
                }
            }
        }
        Command::Delta { li_summary, isolated_summary, out } => {
            let table = report_client_deltas(&read_summary(&li_summary)?, &read_summary(&isolated_summary)?)?;
            let out = out.unwrap_or_else(|| config_dir(&li_summary).join("deltas.csv"));
            table.write_csv(&out)?;
            println!("{table}");
        }
        Command::Pipeline { model } => {
            let m = PipelineModel::load(&model)?;
            let e = estimate_pipeline_makespan(&m)?;
            println!("{}", serde_json::to_string_pretty(&e)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
