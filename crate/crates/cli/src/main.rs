use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod project;

/// Condense temporal action segmentation corpora into latent codes plus a
/// shared generative decoder, and measure what the condensed data is worth.
#[derive(Debug, Parser)]
#[command(name = "segcond", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Pipeline configuration shared by the commands that train or draw randomness.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Pipeline configuration JSON; missing fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed; every module seed is derived from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Baseline {
    Mean,
    Coreset,
    Random,
    Encoded,
    EncodedPerframe,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Init {
    Prior,
    Encoded,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Param {
    Gamma,
    K,
}

#[derive(Debug, Args)]
struct CondenseArgs {
    /// Build a comparator instead of inverting the decoder.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Latent codes per segment.
    #[arg(long, conflicts_with = "per_frame")]
    k: Option<usize>,
    /// One latent code per frame.
    #[arg(long)]
    per_frame: bool,
    /// Inversion iterations per segment.
    #[arg(long)]
    iters: Option<usize>,
    /// Inversion learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<Init>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus (and optionally a held-out split).
    GenSynth {
        /// Generator settings JSON; defaults to the pipeline config's `synth`.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write a held-out split drawn from the same class geometry.
        #[arg(long)]
        test_out: Option<PathBuf>,
        #[arg(long)]
        test_per_activity: Option<usize>,
    },
    /// Train the generative action model.
    TrainGen {
        corpus: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select a diverse subset of videos by farthest point sampling.
    Sample {
        corpus: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Condense the selected videos into a `.cdns` archive.
    Condense {
        corpus: PathBuf,
        /// Trained generator; not needed by the mean and coreset baselines.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Selection JSON from `sample`; every video when omitted.
        #[arg(long)]
        selection: Option<PathBuf>,
        #[command(flatten)]
        opts: CondenseArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restore a condensed archive to a full-length corpus.
    Decode {
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a frame-wise probe.
    Train {
        corpus: PathBuf,
        /// Probe settings JSON; defaults to the pipeline config's `probe`.
        #[arg(long)]
        probe_config: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a probe on a test corpus.
    Eval {
        probe: PathBuf,
        test: PathBuf,
        /// Archive the probe was trained from; adds its storage breakdown.
        #[arg(long)]
        condensed: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Condense and evaluate over a grid of `gamma` or `K` values.
    Sweep {
        corpus: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        param: Param,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        opts: CondenseArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory receiving one report per cell plus a summary.
        #[arg(long)]
        out: PathBuf,
    },
    /// Storage breakdown and per-segment loss statistics of an archive.
    Stats {
        archive: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project original and decoded frames onto two principal components.
    Project {
        corpus: PathBuf,
        decoded: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::configure_threads().and_then(|()| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", commands::one_line(&e));
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
