use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bimodec::ErrorClass;
use bimodec_cli::commands;
use bimodec_cli::runner::{ModelKind, Modality};

#[derive(Parser)]
#[command(
    name = "bimodec",
    version,
    about = "Continuous bimanual grip-force decoding from EEG and fNIRS",
    propagate_version = true
)]
struct Cli {
    /// Cap worker threads (overrides the BIMODEC_THREADS environment
    /// variable; default uses all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording session into a dataset directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's trials per condition.
        #[arg(long)]
        trials_per_condition: Option<usize>,
    },
    /// Condition a raw dataset and save the processed signals.
    Preprocess {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Extract the per-trial feature stream and export it with its layout.
    Features {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a decoder on a dataset and evaluate it on held-out trials.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Decoder family: linear | cnnatt
        #[arg(long, value_parser = parse_model)]
        model: ModelKind,
        /// Feature columns to use: eeg | fnirs | both | skin
        #[arg(long, value_parser = parse_modality)]
        modality: Modality,
    },
    /// Rank feature groups of a trained decoder by temporal shuffling.
    Sensitivity {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional config cross-check; must match the checkpoint's.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Measure per-window prediction latency of a trained decoder.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Write bench.json here; prints to stdout either way.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
    },
    /// Aggregate run directories into one comparison table and chart.
    Report {
        /// Run output directories (each holding a report.json).
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Emit a config file holding every default value.
    Init {
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    ModelKind::from_str_tag(s).ok_or_else(|| format!("expected 'linear' or 'cnnatt', got {s:?}"))
}

fn parse_modality(s: &str) -> Result<Modality, String> {
    Modality::from_str_tag(s)
        .ok_or_else(|| format!("expected 'eeg', 'fnirs', 'both' or 'skin', got {s:?}"))
}

/// Thread cap: --threads beats BIMODEC_THREADS beats rayon's default.
fn init_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let from_env = std::env::var("BIMODEC_THREADS")
        .ok()
        .map(|v| {
            v.parse::<usize>().map_err(|_| {
                bimodec::Error::Config(format!("BIMODEC_THREADS={v:?} is not a thread count"))
            })
        })
        .transpose()?;
    let n = match flag.or(from_env) {
        Some(0) => {
            return Err(bimodec::Error::Config("thread count must be at least 1".into()).into())
        }
        Some(n) => n,
        None => return Ok(()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow::anyhow!("thread pool init failed: {e}"))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Synth {
            out,
            config,
            seed,
            trials_per_condition,
        } => commands::cmd_synth(&out, config.as_deref(), seed, trials_per_condition),
        Command::Preprocess { dataset, out, config } => {
            commands::cmd_preprocess(&dataset, &out, config.as_deref())
        }
        Command::Features { dataset, out, config } => {
            commands::cmd_features(&dataset, &out, config.as_deref())
        }
        Command::Run {
            dataset,
            out,
            config,
            model,
            modality,
        } => commands::cmd_run(&dataset, &out, config.as_deref(), model, modality),
        Command::Sensitivity {
            checkpoint,
            dataset,
            out,
            config,
        } => commands::cmd_sensitivity(&checkpoint, &dataset, &out, config.as_deref()),
        Command::Bench {
            checkpoint,
            dataset,
            out,
            repeats,
            warmup,
        } => commands::cmd_bench(&checkpoint, &dataset, out.as_deref(), repeats, warmup),
        Command::Report { runs, out } => commands::cmd_report(&runs, &out),
        Command::Config { action } => match action {
            ConfigAction::Init { out } => commands::cmd_config_init(out.as_deref()),
        },
    }
}

/// Exit codes: 0 ok, 2 configuration error, 3 data/IO error, 4 numeric
/// failure. Classified from the first library error in the chain.
fn exit_code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(be) = cause.downcast_ref::<bimodec::Error>() {
            return match be.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
