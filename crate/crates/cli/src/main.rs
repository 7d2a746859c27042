//! `smc`: the pipeline behind one binary — dataset synthesis, training,
//! evaluation, feature diagnostics, mix previews, and self-verification.
//!
//! Exit codes: 0 success; 2 config error (the message names the offending
//! key); 3 verification failure (every failed oracle is listed). Internal
//! faults (I/O on outputs, numeric divergence) exit 1.

mod cmds;
mod manifest;

use clap::{Args, Parser, Subcommand};
use smc_core::analysis::{FeatureSource, IsMetric};
use smc_core::mixer::{MixOp, Placement};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "smc",
    version,
    about = "supervised contrastive learning on mixed classes for long-tailed recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a long-tailed synthetic dataset plus its semantic sidecar
    Synth(SynthArgs),
    /// Train a model, writing a checkpoint and a JSONL epoch log
    Train(TrainArgs),
    /// Evaluate a checkpoint: per-class and many/medium/few accuracies
    Eval(EvalArgs),
    /// Feature-space diagnostics (inter-class and semantic-similarity scores)
    Analyze(AnalyzeArgs),
    /// Blend sample pairs and dump the views with their mix records
    MixPreview(PreviewArgs),
    /// Run the built-in oracle suite
    Verify(VerifyArgs),
}

/// Flags every command shares. Flags override config-file values; the
/// merged result is echoed into the run manifest.
#[derive(Args)]
struct Common {
    /// JSON config file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Primary output path; sidecars and the manifest derive from it
    #[arg(short, long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Suppress informational output (failures still print)
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Number of classes
    #[arg(long)]
    classes: Option<usize>,
    /// Head-to-tail imbalance ratio
    #[arg(long)]
    rho: Option<f64>,
    /// Head class size; tail sizes follow the imbalance profile
    #[arg(long)]
    n_max: Option<u32>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Shifts instance noise only: same classes, disjoint samples
    #[arg(long)]
    instance_salt: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Training dataset (.smcd)
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Continue a saved checkpoint (its embedded config applies)
    #[arg(long, value_name = "PATH")]
    resume: Option<PathBuf>,
    /// Stop after this epoch instead of the full schedule
    #[arg(long, value_name = "EPOCH")]
    stop_after: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Contrastive loss weight in the combined objective
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Evaluation dataset (.smcd)
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Add the log-prior to the logits before the argmax
    #[arg(long)]
    with_prior: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset to embed and score (.smcd)
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Semantic vector sidecar; defaults to the one next to the dataset
    #[arg(long, value_name = "PATH")]
    semantic: Option<PathBuf>,
    /// Which representation the class centers average
    #[arg(long, value_parser = cmds::parse_kebab::<FeatureSource>)]
    source: Option<FeatureSource>,
    /// How center differences are reduced in the inter-class score
    #[arg(long, value_parser = cmds::parse_kebab::<IsMetric>)]
    is_metric: Option<IsMetric>,
}

#[derive(Args)]
struct PreviewArgs {
    #[command(flatten)]
    common: Common,
    /// Source dataset (.smcd)
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Number of blended views to write
    #[arg(long)]
    count: Option<usize>,
    /// Beta(α,α) concentration for the combination ratio
    #[arg(long)]
    alpha: Option<f64>,
    /// Keep the raw Beta draw instead of the [0.2,0.8] band
    #[arg(long)]
    full_range: bool,
    #[arg(long, value_parser = cmds::parse_kebab::<MixOp>)]
    mix_op: Option<MixOp>,
    /// When augmentation runs relative to blending
    #[arg(long, value_parser = cmds::parse_kebab::<Placement>)]
    placement: Option<Placement>,
    /// Tail-favoring exponent of the foreground sampler
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Shrink fuzz volumes for a fast smoke pass
    #[arg(long)]
    quick: bool,
    /// Bias one gradient check's analytic side (test fixture)
    #[arg(long, hide = true, value_name = "CHECK")]
    corrupt: Option<String>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth(a) => &a.common,
            Command::Train(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::Analyze(a) => &a.common,
            Command::MixPreview(a) => &a.common,
            Command::Verify(a) => &a.common,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.command.common().quiet { "off" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Synth(args) => cmds::synth(args),
        Command::Train(args) => cmds::train(args),
        Command::Eval(args) => cmds::eval(args),
        Command::Analyze(args) => cmds::analyze(args),
        Command::MixPreview(args) => cmds::mix_preview(args),
        Command::Verify(args) => cmds::verify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
