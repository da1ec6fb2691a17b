mod commands;
mod error;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tribe_core::datastore::{Modality, Split};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "tribe", version, about = "Multimodal fMRI encoding pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Modality kept at the input; the others are zeroed.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum MaskArg {
    Text,
    Audio,
    Video,
    None,
}

impl MaskArg {
    fn keep(self) -> Option<Modality> {
        match self {
            MaskArg::Text => Some(Modality::Text),
            MaskArg::Audio => Some(Modality::Audio),
            MaskArg::Video => Some(Modality::Video),
            MaskArg::None => None,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a known teacher.
    GenSynth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one encoder; writes final and SWA checkpoints plus a log.
    Train {
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        /// JSON with optional `arch` and `train` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `train/` next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a trained checkpoint per parcel.
    Eval {
        /// Training run directory.
        #[arg(long, default_value = ".")]
        run: PathBuf,
        /// Defaults to the dataset the run was trained on.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        /// Keep only this modality at the input.
        #[arg(long, value_enum, default_value = "none")]
        mask: MaskArg,
        #[arg(long, default_value = "swa")]
        checkpoint: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an ensemble population and fit per-parcel weights on val.
    EnsembleFit {
        #[arg(long)]
        data: PathBuf,
        /// JSON with optional `ensemble`, `arch` and `train` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Members trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Blend member predictions with the fitted weights and score them.
    EnsemblePredict {
        /// Ensemble directory written by `ensemble-fit`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score each modality alone and assign every parcel an RGB color.
    Probe {
        #[arg(long, default_value = ".")]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        #[arg(long, default_value = "swa")]
        checkpoint: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation suite over several seeds.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// JSON with an `ablation` section and optional `arch` and `train`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the configured seed list with this one seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize every score table below a directory.
    Report {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("TRIBE_NUM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("TRIBE_NUM_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenSynth { config, out, seed } => commands::gen_synth(config.as_deref(), &out, seed),
        Command::Train {
            data,
            config,
            out,
            seed,
        } => {
            let out = out.unwrap_or_else(|| data.parent().unwrap_or(".".as_ref()).join("train"));
            commands::train_cmd(&data, config.as_deref(), &out, seed)
        }
        Command::Eval {
            run,
            data,
            split,
            mask,
            checkpoint,
            out,
        } => commands::eval(commands::EvalArgs {
            run,
            data,
            split: split.into(),
            keep: mask.keep(),
            checkpoint,
            out,
        }),
        Command::EnsembleFit {
            data,
            config,
            out,
            seed,
            jobs,
        } => commands::ensemble_fit(&data, config.as_deref(), &out, seed, jobs),
        Command::EnsemblePredict { run, data, split, out } => {
            commands::ensemble_predict(&run, data, split.into(), out)
        }
        Command::Probe {
            run,
            data,
            split,
            checkpoint,
            out,
        } => commands::probe(&run, data, split.into(), &checkpoint, out),
        Command::Ablate {
            data,
            config,
            out,
            seed,
        } => commands::ablate(&data, &config, &out, seed),
        Command::Report { dir, out, bins } => report::report(&dir, out, bins),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
