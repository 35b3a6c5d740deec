//! `sarforge`: simulate echoes, focus them, build datasets, train and
//! evaluate the networks, run integrated inference, and benchmark it.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("SARFORGE_GIT_DESCRIBE"), ")");

#[derive(Debug, Parser)]
#[command(name = "sarforge", version = VERSION, about = "SAR image formation with the Range Doppler Algorithm and learned networks")]
struct Cli {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for all outputs.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true, env = "SARFORGE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Rdanet,
    Classifier,
    ArmA,
    ArmB,
    ArmC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Ssim,
    Accuracy,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate raw echoes of random scenes or of a single point target.
    Simulate {
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Single target at slant range RANGE and along-track position AZIMUTH, metres.
        #[arg(long, value_names = ["RANGE", "AZIMUTH"], num_args = 2, allow_negative_numbers = true)]
        point: Option<Vec<f64>>,
        /// Noise standard deviation per component; defaults to the dataset setting.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Focus a raw echo file with the Range Doppler Algorithm.
    Focus {
        echo: PathBuf,
        #[arg(long)]
        png: bool,
    },
    /// Generate, split, normalize, and write a paired dataset.
    Dataset {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
    },
    /// Train a network on a dataset directory.
    Train {
        #[arg(value_enum)]
        which: Which,
        #[arg(long, default_value = "data")]
        data: PathBuf,
        /// Arm A checkpoint whose encoder arm B freezes; trained first when omitted.
        #[arg(long)]
        dce: Option<PathBuf>,
    },
    /// Score a checkpoint on the validation split.
    Eval {
        #[arg(value_enum)]
        metric: Metric,
        checkpoint: PathBuf,
        #[arg(long, default_value = "data")]
        data: PathBuf,
    },
    /// Echo to focused image and class probabilities.
    Infer {
        echo: PathBuf,
        #[arg(long)]
        rdanet: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        png: bool,
    },
    /// Time integrated inference per stage, on one thread unless --threads is given.
    Bench {
        /// Freshly initialized networks are timed when omitted.
        #[arg(long)]
        rdanet: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("thread count must be >= 1".into()));
        }
        // Fails only if the pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let overrides = Overrides {
        seed: cli.seed,
        epochs: cli.epochs,
        batch: cli.batch,
        lr: cli.lr,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let out = cli.out.as_path();
    output::prepare_run_dir(out, &cfg)?;
    match cli.command {
        Command::Simulate { n, point, noise } => commands::simulate(&cfg, out, n, point.as_deref(), noise),
        Command::Focus { echo, png } => commands::focus(&cfg, out, &echo, png),
        Command::Dataset { n, val } => commands::dataset(&cfg, out, n, val),
        Command::Train { which, data, dce } => commands::train(&cfg, out, which, &data, dce.as_deref()),
        Command::Eval {
            metric,
            checkpoint,
            data,
        } => commands::eval(&cfg, out, metric, &checkpoint, &data),
        Command::Infer {
            echo,
            rdanet,
            classifier,
            png,
        } => commands::infer(out, &echo, &rdanet, &classifier, png),
        Command::Bench { rdanet, classifier } => commands::bench(&cfg, out, rdanet.as_deref(), classifier.as_deref(), cli.threads),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sarforge: {e}");
            e.exit_code()
        }
    }
}
