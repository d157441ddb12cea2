mod commands;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Rotational warping, evaluation and statistics for 360-degree optical flow.
#[derive(Debug, Parser)]
#[command(name = "omniflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rotate an equirectangular image (PNG) or flow field (.flo).
    Warp(WarpArgs),
    /// Compare predicted flows against ground truth.
    Eval(EvalArgs),
    /// Luminance, spectrum, derivative and flow statistics of a corpus.
    Stats(StatsArgs),
    /// Write the distortion density map.
    DistortionMap(DistortionArgs),
    /// Emit a manifest of rotation pairs for a dataset.
    AugmentPairs(AugmentArgs),
    /// Generate a synthetic dataset or statistics sample pack.
    SamplePack(SamplePackArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Image,
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    Nearest,
    Bilinear,
}

impl From<Interp> for omniflow::Interpolation {
    fn from(i: Interp) -> Self {
        match i {
            Interp::Nearest => omniflow::Interpolation::Nearest,
            Interp::Bilinear => omniflow::Interpolation::Bilinear,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WarpArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "out")]
    pub output: PathBuf,
    /// Angles in radians, or degrees with a `deg` suffix (e.g. `30deg`).
    #[arg(long, default_value = "0", value_parser = util::parse_angle, allow_hyphen_values = true)]
    pub pitch: f64,
    #[arg(long, default_value = "0", value_parser = util::parse_angle, allow_hyphen_values = true)]
    pub roll: f64,
    #[arg(long, default_value = "0", value_parser = util::parse_angle, allow_hyphen_values = true)]
    pub yaw: f64,
    /// Inferred from the input extension when omitted.
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Apply the reverse rotation.
    #[arg(long)]
    pub inverse: bool,
    #[arg(long, value_enum, default_value = "bilinear")]
    pub interp: Interp,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// `auto` builds the density map for each resolution, `none` disables
    /// weighting, anything else is a raw density file.
    #[arg(long, default_value = "auto")]
    pub density: String,
    /// Number of equal density bins over [0.5, 1), or comma-separated edges.
    #[arg(long, default_value = "5")]
    pub bins: String,
    #[arg(long)]
    pub report: PathBuf,
    /// Defaults to the report path with a `.csv` extension.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    /// PNG frames; each subdirectory is treated as its own sequence.
    #[arg(long)]
    pub frames_dir: PathBuf,
    #[arg(long)]
    pub flows_dir: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    /// Directory for per-histogram CSV files.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    /// Directory for rendered PNG curves.
    #[arg(long)]
    pub plots: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DistortionArgs {
    #[arg(long, default_value_t = 1024)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    #[arg(long, default_value_t = omniflow::distortion::DEFAULT_FACE_SIZE)]
    pub face_size: usize,
    /// 16-bit grayscale PNG.
    #[arg(long)]
    pub out_img: Option<PathBuf>,
    /// Raw little-endian grid with an 8-byte header.
    #[arg(long)]
    pub out_raw: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "v2")]
    pub strategy: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long)]
    pub out_manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PackKind {
    /// 4 videos of 8 frames at 32x64 with flows and depth.
    Mini,
    /// 8 consecutive frames at 256x512 and their forward flow.
    Stats,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SamplePackArgs {
    #[arg(long, value_enum)]
    pub kind: PackKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { util::EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Warp(a) => commands::warp(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Stats(a) => commands::stats(&a),
        Command::DistortionMap(a) => commands::distortion_map(&a),
        Command::AugmentPairs(a) => commands::augment_pairs(&a),
        Command::SamplePack(a) => commands::sample_pack(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(util::exit_code(&e))
        }
    }
}
