use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gcnn_cli::{cmd_cluster, cmd_compare, cmd_eval, cmd_ingest, cmd_param_count, cmd_train, CliError, EvalSplit, RunConfig};

#[derive(Parser)]
#[command(name = "gcnn", version, about = "Grouped CNNs for multivariate time-series regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Replaces the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value`; the value is parsed as TOML.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Test,
    Validation,
    Train,
}

#[derive(Subcommand)]
enum Command {
    /// Repair, standardize and window the data; writes dataset.csv and manifest.json.
    Ingest(Common),
    /// Spectral clustering of the input series; writes assignment.csv and cluster.json.
    Cluster(Common),
    /// Train a model; writes checkpoint.json, history.csv and train_report.json.
    Train(Common),
    /// Score a checkpoint; writes eval_report.json and predictions.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to checkpoint.json in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Baselines and networks over repeated target picks; writes compare.csv.
    Compare(Common),
    /// Parameter count of the configured model and its ungrouped counterpart.
    ParamCount(Common),
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let mut overrides = c.overrides.clone();
    if let Some(seed) = c.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &c.out {
        let abs = std::env::current_dir()?.join(out);
        overrides.push(format!("out={}", toml::Value::String(abs.display().to_string())));
    }
    RunConfig::load(&c.config, &overrides)
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    match cli.command {
        Command::Ingest(c) => cmd_ingest(&load(&c)?),
        Command::Cluster(c) => cmd_cluster(&load(&c)?),
        Command::Train(c) => cmd_train(&load(&c)?),
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let cfg = load(&common)?;
            let ck = checkpoint.unwrap_or_else(|| cfg.out.join("checkpoint.json"));
            let split = match split {
                SplitArg::Test => EvalSplit::Test,
                SplitArg::Validation => EvalSplit::Validation,
                SplitArg::Train => EvalSplit::Train,
            };
            cmd_eval(&cfg, &ck, split)
        }
        Command::Compare(c) => cmd_compare(&load(&c)?),
        Command::ParamCount(c) => cmd_param_count(&load(&c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gcnn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
