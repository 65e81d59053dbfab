//! `fedff`: runs the experiments and writes their CSV tables.
//!
//! Exit status is 0 on success, 2 when some laps diverged and their cells
//! are marked in the output, and 1 on configuration or runtime errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fedff_core::experiments::{
    cmd_baseline, cmd_centralized, cmd_epoch_sweep, cmd_federated, cmd_gen_paths, cmd_local_vs_fed,
    ExperimentError, ExperimentSpec, ResultTable, SplitChoice,
};
use fedff_core::federation::Weighting;
use fedff_core::trajgen::load_specs;

#[derive(Debug, Parser)]
#[command(name = "fedff", version, about = "Federated learning of neural feedforward steering controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory of per-client path spec JSON files (default: built-in specs).
    #[arg(long, global = true, value_name = "DIR")]
    paths: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "FEDFF_OUT", default_value = "results", value_name = "DIR")]
    out: PathBuf,

    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Global communication rounds G.
    #[arg(long, global = true)]
    rounds: Option<usize>,

    /// Local epochs E (centralized: training epochs).
    #[arg(long, global = true)]
    epochs: Option<usize>,

    /// Scheduled run index 1-10, or a comma-separated list of test clients.
    #[arg(long, global = true, value_name = "RUN|LIST")]
    split: Option<String>,

    /// FedAvg weighting.
    #[arg(long, global = true, value_enum, default_value_t = WeightingArg::Sample)]
    weighting: WeightingArg,

    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Keep earlier rounds' lap data instead of replacing it each round.
    #[arg(long, global = true)]
    accumulate_data: bool,

    /// Gzip the trajectory logs.
    #[arg(long, global = true)]
    gzip_logs: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightingArg {
    Sample,
    Uniform,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// FB versus FB+analytic feedforward on every client.
    Baseline,
    /// Neural feedforward trained on pooled data.
    Centralized,
    /// Federated proof of concept.
    Federated,
    /// Local-epoch sweep over the scheduled splits.
    Sweep,
    /// Isolated local models against the federated model.
    LocalVsFed,
    /// Write the twelve reference trajectories.
    GenPaths,
}

fn spec_from(cli: &Cli) -> Result<ExperimentSpec, ExperimentError> {
    let mut spec = ExperimentSpec::new(&cli.out);
    spec.seed = cli.seed;
    spec.rounds = cli.rounds;
    spec.epochs = cli.epochs;
    spec.split = cli.split.as_deref().map(str::parse::<SplitChoice>).transpose()?;
    spec.weighting = match cli.weighting {
        WeightingArg::Sample => Weighting::SampleWeighted,
        WeightingArg::Uniform => Weighting::Uniform,
    };
    spec.workers = cli.workers;
    spec.accumulate_data = cli.accumulate_data;
    spec.gzip_logs = cli.gzip_logs;
    if let Some(dir) = &cli.paths {
        spec.specs = load_specs(dir)?;
    }
    Ok(spec)
}

fn print_rows(table: &ResultTable) {
    for r in &table.rows {
        match r.mte {
            Some(m) => println!("{:>5} {:<15} {m:.6}", r.client, r.variant.label()),
            None => println!("{:>5} {:<15} diverged", r.client, r.variant.label()),
        }
    }
}

fn run(cli: &Cli) -> Result<ResultTable, ExperimentError> {
    let spec = spec_from(cli)?;
    let table = match cli.command {
        Command::Baseline => cmd_baseline(&spec)?,
        Command::Centralized => cmd_centralized(&spec)?,
        Command::Federated => cmd_federated(&spec)?,
        Command::GenPaths => cmd_gen_paths(&spec)?,
        Command::Sweep => {
            let (table, result) = cmd_epoch_sweep(&spec)?;
            for (e, curve) in &result.curves {
                if let Some(last) = curve.last() {
                    println!("E={e}: final mean MTE {:.6} (std {:.6}, {} runs)", last.mean, last.std, last.runs);
                }
            }
            table
        }
        Command::LocalVsFed => {
            let (table, result) = cmd_local_vs_fed(&spec)?;
            let locals: std::collections::BTreeSet<_> = result.local.keys().map(|k| k.0).collect();
            for l in locals {
                let ratios: Vec<String> = result
                    .federated
                    .keys()
                    .map(|&t| result.ratio(l, t).map_or_else(|| "-".into(), |r| format!("{r:.3}")))
                    .collect();
                println!("{l:>5} {}", ratios.join(" "));
            }
            table
        }
    };
    print_rows(&table);
    Ok(table)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(table) if table.is_partial() => {
            eprintln!("some laps diverged; their cells are marked in the output");
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
