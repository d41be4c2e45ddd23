//! Command-line front end for the glioma segmentation and survival toolkit.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "gliomapipe", version, about = "Glioma segmentation, radiomics and survival prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArg {
    /// Pipeline configuration (TOML). GLIOMAPIPE_SEED overrides its seed.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Histogram-match and z-score one study against a reference study.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_levels: Option<usize>,
        /// Normalize with foreground statistics and keep background at 0.
        #[arg(long)]
        foreground_only: bool,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Train the network on every study with ground truth in a directory.
    Train {
        #[arg(long)]
        studies: PathBuf,
        /// Checkpoint path; the best epoch is also written to `<out>.best`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Segment one preprocessed study with a trained checkpoint.
    Segment {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Remove lesion components smaller than a voxel threshold.
    Postprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_size: Option<usize>,
        #[arg(long)]
        connectivity: Option<u32>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Extract the 141-value radiomics row of one study.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bin_width: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Fit the survival regressor on a feature table and targets.
    SurvivalTrain {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Predict survival days and buckets for a feature table.
    SurvivalPredict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Dice scores of predicted against true segmentations, matched by file name.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `one` scores regions absent from both as 1.0; `exclude-nan` drops them.
        #[arg(long, default_value = "one")]
        empty_policy: String,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Run pipeline stages end to end from one config file.
    Pipeline {
        /// Comma-separated subset of preprocess,segment,postprocess,features,survival.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<String>>,
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Write a synthetic cohort of studies with manifests.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Volume size as `nx,ny,nz`.
        #[arg(long, value_delimiter = ',', default_value = "64,64,20")]
        dims: Vec<usize>,
    },
    /// Render a FLAIR slice with label overlay as a PPM image.
    Overlay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seg: PathBuf,
        #[arg(long)]
        slice: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
