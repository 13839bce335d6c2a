use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use gbi_cli::commands::{self, RunDirs};
use gbi_cli::config::{parse_seeds, RunConfig};
use gbi_cli::{error_line, report};

#[derive(Parser)]
#[command(name = "gbi", version, about = "Gradient-based inference experiments")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Runs every seed in `A..B` (inclusive), writing to `<out>/seed_<s>`.
    #[arg(long, global = true, conflicts_with = "seed")]
    seeds: Option<String>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset root; overrides `data_dir`.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Directory holding checkpoints; defaults to the output directory.
    #[arg(long, global = true)]
    models: Option<PathBuf>,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Toy training stream and generalization sweep as CSV.
    GenData,
    /// Trains the task-aware LSTM and the baseline LSTM.
    TrainToy,
    /// Generalization MSE and the one-step belief curve.
    EvalToy,
    /// Default/engaged traces, exact and grafted posteriors on a held-out stream.
    InferStream,
    /// Trains the conditional autoencoder and the classifier.
    TrainMnist,
    /// Test-set accuracy for one method or `all`.
    EvalMnist {
        #[arg(long)]
        method: Option<String>,
    },
    /// MNIST vs Fashion-MNIST AUCROC.
    Ood,
    /// Decodes one test image under each forced label.
    CondGen,
    /// Aggregates per-seed CSVs into a summary table on stdout.
    Report {
        #[arg(long)]
        table: u8,
        files: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| gbi_cli::config::ConfigError(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.display().to_string();
    }
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.display().to_string();
    }

    if let Command::Report { table, files } = &cli.command {
        let text = report::render(*table, files, [cfg.mu1, cfg.mu2])?;
        print!("{text}");
        return Ok(());
    }

    let seeds = match &cli.seeds {
        Some(s) => Some(parse_seeds(s)?),
        None => None,
    };
    let runs: Vec<(RunConfig, RunDirs)> = match seeds {
        None => {
            let out = PathBuf::from(&cfg.out_dir);
            let models = cli.models.clone().unwrap_or_else(|| out.clone());
            vec![(cfg.clone(), RunDirs { out, models })]
        }
        Some(list) => list
            .into_iter()
            .map(|s| {
                let sub = format!("seed_{s}");
                let out = PathBuf::from(&cfg.out_dir).join(&sub);
                let models = cli.models.as_ref().map(|m| m.join(&sub)).unwrap_or_else(|| out.clone());
                let mut c = cfg.clone();
                c.seed = s;
                c.out_dir = out.display().to_string();
                (c, RunDirs { out, models })
            })
            .collect(),
    };

    for (cfg, dirs) in &runs {
        match &cli.command {
            Command::GenData => commands::gen_data(cfg, dirs)?,
            Command::TrainToy => commands::train_toy(cfg, dirs)?,
            Command::EvalToy => commands::eval_toy(cfg, dirs)?,
            Command::InferStream => commands::infer_stream(cfg, dirs)?,
            Command::TrainMnist => commands::train_mnist(cfg, dirs)?,
            Command::EvalMnist { method } => commands::eval_mnist(cfg, dirs, method.as_deref().unwrap_or(&cfg.method))?,
            Command::Ood => commands::ood(cfg, dirs)?,
            Command::CondGen => commands::cond_gen(cfg, dirs)?,
            Command::Report { .. } => unreachable!("handled above"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
