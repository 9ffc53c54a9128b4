use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "bandmatch",
    version,
    about = "Band-wise statistics matching for device-mismatched audio features"
)]
pub struct Cli {
    /// JSON run configuration (see config.schema.json); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the seed used by the chosen command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Log debug messages.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute log-Mel feature files for every WAV listed in a manifest.
    Extract {
        /// CSV with header `path,scene,device,split`.
        #[arg(long)]
        manifest: PathBuf,
        /// Feature preset: dcase40, kaggle64 or custom (custom reads `features.custom`).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Estimate per-band statistics over a selection of an index.
    Stats {
        #[arg(long)]
        index: PathBuf,
        #[command(flatten)]
        filter: Filter,
    },
    /// Adapt features to a set of source statistics.
    Adapt {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        stats: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Adapt random segments of this many samples instead of whole domains.
        #[arg(long)]
        segment_len: Option<usize>,
        #[command(flatten)]
        filter: Filter,
    },
    /// Fit the softmax scene classifier.
    Train {
        #[arg(long)]
        index: PathBuf,
        #[command(flatten)]
        filter: Filter,
    },
    /// Score a model; one row per (split, device, adapted) group.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Feature index; repeat to evaluate several at once.
        #[arg(long, required = true)]
        index: Vec<PathBuf>,
    },
    /// Run the synthetic benchmark: accuracy table and segment-length sweeps.
    Sweep,
    /// Write the synthetic benchmark's feature files, index and device channels.
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Copy features unchanged.
    None,
    /// Each device adapted with its own statistics.
    Dda,
    /// All devices pooled and adapted together.
    Dia,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::None => "none",
            Mode::Dda => "dda",
            Mode::Dia => "dia",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Filter {
    /// Only use entries of this split (train, validation or test).
    #[arg(long)]
    pub split: Option<String>,
    /// Only use entries recorded by these devices (repeatable).
    #[arg(long)]
    pub device: Vec<String>,
}
