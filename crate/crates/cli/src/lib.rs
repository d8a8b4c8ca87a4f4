//! The `mcdc` command: train, eval, analyze and interpolate.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 data or checkpoint error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;
pub mod manifest;
mod setup;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mcdc", version, about = "Mixing-consistent deep clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an autoencoder and write checkpoint, metrics and manifest.
    Train(TrainArgs),
    /// Cluster whitened latents with k-means and report ACC and NMI.
    Eval(EvalArgs),
    /// Per-class PCA variance profile and a 2-D projection.
    Analyze(AnalyzeArgs),
    /// Decode latent interpolations between random pairs.
    Interpolate(InterpolateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `on` or `off`; `off` lets k-means restarts use all cores.
    #[arg(long)]
    deterministic: Option<String>,
    /// mnist, mnist2 or blobs.
    #[arg(long)]
    dataset: Option<String>,
    /// Any setting as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// baseline, acai or mcdc.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    mix_weight: Option<f64>,
    /// conv_paper or mlp_toy.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Hidden widths of mlp_toy, comma separated.
    #[arg(long)]
    hidden: Option<String>,
}

#[derive(Debug, Args)]
struct CheckpointArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    base: CheckpointArgs,
    /// Cluster count; defaults to the dataset's class count.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kmeans_restarts: Option<usize>,
    /// train or test.
    #[arg(long, default_value = "train")]
    split: String,
    /// Keep only the leading whitened dimensions.
    #[arg(long)]
    whiten_dims: Option<usize>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    base: CheckpointArgs,
    /// train or test; required because the choice changes the result.
    #[arg(long)]
    split: String,
    #[arg(long)]
    cutoff: Option<usize>,
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    #[command(flatten)]
    base: CheckpointArgs,
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Also write the plain reconstructions of the first pair members.
    #[arg(long)]
    recon_check: bool,
}

fn push<T: ToString>(out: &mut Vec<(String, String)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key.to_owned(), v.to_string()));
    }
}

impl Common {
    fn flag_layer(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{item}`")))?;
            out.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        push(&mut out, "seed", &self.seed);
        push(&mut out, "deterministic", &self.deterministic);
        push(&mut out, "dataset", &self.dataset);
        Ok(out)
    }
}

impl TrainArgs {
    fn flag_layer(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = self.common.flag_layer()?;
        push(&mut out, "variant", &self.variant);
        push(&mut out, "epochs", &self.epochs);
        push(&mut out, "lambda", &self.lambda);
        push(&mut out, "gamma", &self.gamma);
        push(&mut out, "batch_size", &self.batch_size);
        push(&mut out, "lr", &self.lr);
        push(&mut out, "inner_steps", &self.inner_steps);
        push(&mut out, "mix_weight", &self.mix_weight);
        push(&mut out, "family", &self.family);
        push(&mut out, "latent_dim", &self.latent_dim);
        push(&mut out, "hidden", &self.hidden);
        Ok(out)
    }
}

/// Run with full argv (program name first) and return the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Interpolate(a) => commands::interpolate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mcdc: {e}");
            e.exit_code()
        }
    }
}
