//! `bluref` — reference-guided deblurring toolkit CLI.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use bluref_core::pseudosharp::Strategy;
use bluref_core::BlurefError;

/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn config(msg: String) -> Self {
        CliError { code: 2, msg }
    }
    pub fn data(msg: String) -> Self {
        CliError { code: 3, msg }
    }
    pub fn numerical(msg: String) -> Self {
        CliError { code: 4, msg }
    }
}

impl From<BlurefError> for CliError {
    fn from(e: BlurefError) -> Self {
        let code = match &e {
            BlurefError::InvalidConfig(_) | BlurefError::Serde(_) => 2,
            BlurefError::Numerical(_) => 4,
            _ => 3,
        };
        CliError { code, msg: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "bluref", version, about = "Reference-guided video deblurring toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize toy datasets and warp/degradation training pairs
    GenData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the confidence-aware dense matcher on synthetic pairs
    TrainDm {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a trained matcher on a target/reference image pair
    Match {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate references into a pseudo-sharp target and confidence mask
    GenPseudo {
        #[arg(long)]
        config: PathBuf,
        /// Aggregation strategy override: avg | seq | prog
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Confidence binarization threshold override
        #[arg(long)]
        tau: Option<f32>,
    },
    /// Run the iterative deblurring training loop on a toy dataset
    RunBluref {
        #[arg(long)]
        config: PathBuf,
        /// Aggregation strategy override: avg | seq | prog
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Confidence binarization threshold override
        #[arg(long)]
        tau: Option<f32>,
        /// Export the final pseudo pairs to this directory
        #[arg(long, value_name = "DIR")]
        export_pairs: Option<PathBuf>,
    },
    /// Train a deblurring network from exported (blur, target, mask) pairs
    TrainPairs {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute PSNR/SSIM between prediction and ground-truth directories
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { config } => commands::cmd_gen_data(&config),
        Command::TrainDm { config } => commands::cmd_train_dm(&config),
        Command::Match { config } => commands::cmd_match(&config),
        Command::GenPseudo { config, strategy, tau } => commands::cmd_gen_pseudo(&config, strategy, tau),
        Command::RunBluref { config, strategy, tau, export_pairs } => {
            commands::cmd_run_bluref(&config, strategy, tau, export_pairs)
        }
        Command::TrainPairs { config } => commands::cmd_train_pairs(&config),
        Command::Eval { config } => commands::cmd_eval(&config),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.msg);
        std::process::exit(e.code);
    }
}
