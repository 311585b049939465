mod commands;
mod pipeline;
mod settings;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vocodet::dsp::FeatureKind;

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("no such file: {s}"))
    }
}

fn existing_dir(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_dir() {
        Ok(p)
    } else {
        Err(format!("no such directory: {s}"))
    }
}

fn feature_kind(s: &str) -> Result<FeatureKind, String> {
    s.parse().map_err(|e: vocodet::Error| e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "vocodet",
    version,
    about = "Cepstral GMM detection of vocoder-generated speech"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct GlobalArgs {
    /// Corpus manifest (JSON with root and path/label/collection entries)
    #[arg(long, global = true, value_parser = existing_file)]
    pub manifest: Option<PathBuf>,
    /// Output directory, created if missing
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for training, the train/hold-out split and corpus synthesis
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON file overriding built-in defaults; flags override the file
    #[arg(long, global = true, value_parser = existing_file)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FeatureArgs {
    /// Cepstral family: lfcc or mfcc
    #[arg(long, value_parser = feature_kind)]
    pub kind: Option<FeatureKind>,
    /// Number of triangular filters
    #[arg(long)]
    pub filters: Option<usize>,
    /// Cepstral coefficients kept per frame
    #[arg(long)]
    pub coeffs: Option<usize>,
    /// Frames on each side of the delta regression
    #[arg(long)]
    pub delta_window: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    /// Mixture components per model
    #[arg(long)]
    pub components: Option<usize>,
    /// Passes over the training frames
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Frames per gradient step
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Holdout,
    All,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write one WFC1 feature cache per manifest clip
    Extract {
        #[command(flatten)]
        features: FeatureArgs,
        /// Recompute caches that are already up to date
        #[arg(long)]
        force: bool,
    },
    /// Pitch, centroid and per-bin energy statistics per collection
    Analyze {
        /// Collection the energy differences are measured against
        #[arg(long)]
        reference: Option<String>,
        /// Collections to compare with the reference (default: all others)
        #[arg(long, value_delimiter = ',')]
        compare: Vec<String>,
    },
    /// Fit the real and fake mixtures on the training split
    Train {
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Read features from this extract output instead of the audio
        #[arg(long = "features", value_parser = existing_dir)]
        cache: Option<PathBuf>,
        /// Generated collections for the fake model (default: all)
        #[arg(long, value_delimiter = ',')]
        fake: Vec<String>,
    },
    /// Score clips with a trained detector
    Score {
        #[command(flatten)]
        features: FeatureArgs,
        /// Detector written by `train`
        #[arg(long, value_parser = existing_file)]
        model: PathBuf,
        #[arg(long = "features", value_parser = existing_dir)]
        cache: Option<PathBuf>,
        /// Score only the hold-out split recorded in the model, or every clip
        #[arg(long, value_enum, default_value = "holdout")]
        split: SplitArg,
    },
    /// Train one detector per generated collection and test on all of them
    Eval {
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long = "features", value_parser = existing_dir)]
        cache: Option<PathBuf>,
        /// Training collections (default: every generated collection)
        #[arg(long, value_delimiter = ',')]
        train_sets: Vec<String>,
        /// Test collections (default: every generated collection)
        #[arg(long, value_delimiter = ',')]
        test_sets: Vec<String>,
    },
    /// Leave-one-out grid over the generated collections
    Loo {
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long = "features", value_parser = existing_dir)]
        cache: Option<PathBuf>,
        /// Collections in the grid (default: every generated collection)
        #[arg(long, value_delimiter = ',')]
        collections: Vec<String>,
    },
    /// Pass every clip through a narrowband telephone channel
    SimulatePhone {
        /// Apply 8-bit mu-law companding
        #[arg(long)]
        mu_law: bool,
    },
    /// Generate a labelled synthetic corpus with its manifest
    SynthCorpus {
        #[arg(long)]
        n_real: Option<usize>,
        #[arg(long)]
        n_fake: Option<usize>,
        /// Number of generated collections
        #[arg(long)]
        fake_collections: Option<usize>,
        /// Mean clip length in seconds
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Blur-path attribution of one clip's score
    Attribute {
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long, value_parser = existing_file)]
        model: PathBuf,
        /// WAV file to explain
        #[arg(long, value_parser = existing_file)]
        input: PathBuf,
        /// Largest blur scale in feature cells
        #[arg(long)]
        sigma_max: Option<f64>,
        /// Integration steps along the blur path
        #[arg(long)]
        steps: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.global.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    if jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
