use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crbm_cli::{cmd_eval, cmd_extract, cmd_sample, cmd_train, exit_code, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "crbm", version, about = "Train a convolutional RBM on piano rolls and sample under structure constraints")]
struct Cli {
    /// Cap on worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set seed=3`. Repeatable; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the rolls listed in a manifest; writes the model and `<model>.train.csv`.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Extract a structure template from a MIDI or .prl piece.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run constrained sampling chains and write the best rolls and all traces.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compare Information Rates (`ir`) or draw figures (`render`) for rolls or directories of rolls.
    Eval {
        #[arg(long)]
        mode: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Train { manifest, out, cfg } => cmd_train(&manifest, &cfg.resolve()?, &out),
        Command::Extract { input, out, cfg } => cmd_extract(&input, &cfg.resolve()?, &out),
        Command::Sample {
            model,
            template,
            out_dir,
            cfg,
        } => cmd_sample(&model, &template, &cfg.resolve()?, &out_dir),
        Command::Eval {
            mode,
            out_dir,
            cfg,
            inputs,
        } => cmd_eval(&inputs, &mode, &cfg.resolve()?, &out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = run(Cli::parse());
    if let Err(e) = &result {
        eprintln!("crbm: {e}");
    }
    ExitCode::from(exit_code(&result))
}
