use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "overparam", version, about = "Piecewise polynomial and piecewise planar recovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Optimal piecewise polynomial approximation of a 1D signal.
    Project(ProjectArgs),
    /// Recover a 1D signal from noisy samples.
    #[command(name = "denoise1d")]
    #[serde(rename = "denoise1d")]
    Denoise1d(Denoise1dArgs),
    /// Image denoising, segmentation and gradient maps.
    Image(ImageArgs),
    /// Monte-Carlo experiments.
    Experiment(ExperimentArgs),
    /// Rerun a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "overparam-out")]
    pub out: PathBuf,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Worker threads for experiment trials; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Master seed of all random draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingArg {
    /// Coordinates `1..=d`.
    Index,
    /// Coordinates `i / d`.
    Normalized,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProjectArgs {
    /// Signal CSV, one value per line.
    pub input: PathBuf,
    /// Maximum number of jumps.
    #[arg(long)]
    pub k: usize,
    /// Polynomial degree.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Refit with the pieces joined at the found breakpoints.
    #[arg(long)]
    pub continuous: bool,
    /// Coordinate convention of the reported coefficients.
    #[arg(long, value_enum, default_value_t = ScalingArg::Index)]
    pub scaling: ScalingArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Denoise1dMethod {
    Bgapn,
    #[value(name = "bgapn-cont")]
    BgapnCont,
    Sscosamp,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Denoise1dArgs {
    /// Noisy signal CSV.
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Denoise1dMethod,
    /// Polynomial degree.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Number of jumps (sscosamp).
    #[arg(long)]
    pub k: Option<usize>,
    /// Noise standard deviation; the residual bound becomes `sigma * sqrt(d)`.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Residual bound, overriding `--sigma`.
    #[arg(long)]
    pub noise_norm: Option<f64>,
    /// Stopping threshold of the pursuit.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Continuity weight for bgapn-cont.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rows_per_iter: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Clean signal CSV for error metrics.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScalingArg::Index)]
    pub scaling: ScalingArg,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ImageArgs {
    #[command(subcommand)]
    pub op: ImageOp,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum ImageOp {
    /// Piecewise planar denoising.
    Denoise(ImageDenoiseArgs),
    /// Denoise, threshold the gradient map and label the regions.
    Segment(SegmentArgs),
    /// Gradient magnitude `|dh| + |dv|`.
    Gradmap(GradmapArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ImageDenoiseArgs {
    /// Noisy PGM (P5 or P2).
    pub input: PathBuf,
    /// Noise standard deviation on the 0..255 scale.
    #[arg(long)]
    pub sigma: f64,
    /// Average the default four-member ensemble instead of a single run.
    #[arg(long)]
    pub ensemble: bool,
    /// Add diagonal differences (single run only).
    #[arg(long)]
    pub diagonals: bool,
    /// Degree of the bivariate model.
    #[arg(long, default_value_t = 1)]
    pub degree: usize,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Clean PGM for PSNR.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Write plain-text P2 instead of binary P5.
    #[arg(long)]
    pub plain: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SegmentArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    /// Boundary threshold relative to the largest gradient.
    #[arg(long, default_value_t = 0.1)]
    pub rel_threshold: f64,
    /// Regions below this many pixels are merged into a neighbour.
    #[arg(long, default_value_t = 16)]
    pub min_region: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GradmapArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExperimentArgs {
    #[command(subcommand)]
    pub kind: ExperimentKind,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Mean denoising error against the noise level.
    Sweep(SweepArgs),
    /// Recovery rate against the sampling rate.
    Cs(CsArgs),
    /// Empirical restricted isometry constants of Gaussian matrices.
    Rip(RipArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 300)]
    pub d: usize,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Draw discontinuous signals instead of continuous ones.
    #[arg(long)]
    pub discontinuous: bool,
    #[arg(long)]
    pub min_segment: Option<usize>,
    /// Noise standard deviations.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5")]
    pub sigmas: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 1..,
        default_value = "bgapn,bgapn-continuity,projection-oracle-k,projection-oracle-k-continuity"
    )]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 100.0)]
    pub gamma: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CsArgs {
    /// Signal length; `--full` sets 300.
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long)]
    pub full: bool,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Sampling rates m / d.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub ratios: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "sscosamp,bgapn")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub success_tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RipArgs {
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Row counts of the Gaussian matrices.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "40,60,80")]
    pub m: Vec<usize>,
    /// Matrix draws per row count.
    #[arg(long, default_value_t = 10)]
    pub matrices: usize,
    /// Random signals per matrix.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Measure the identity instead.
    #[arg(long)]
    pub identity: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Output directory; defaults to the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn common_mut(&mut self) -> Option<&mut Common> {
        match self {
            Command::Project(a) => Some(&mut a.common),
            Command::Denoise1d(a) => Some(&mut a.common),
            Command::Image(a) => Some(match &mut a.op {
                ImageOp::Denoise(x) => &mut x.common,
                ImageOp::Segment(x) => &mut x.common,
                ImageOp::Gradmap(x) => &mut x.common,
            }),
            Command::Experiment(a) => Some(match &mut a.kind {
                ExperimentKind::Sweep(x) => &mut x.common,
                ExperimentKind::Cs(x) => &mut x.common,
                ExperimentKind::Rip(x) => &mut x.common,
            }),
            Command::Replay(_) => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Project(_) => "project",
            Command::Denoise1d(_) => "denoise1d",
            Command::Image(a) => match a.op {
                ImageOp::Denoise(_) => "image denoise",
                ImageOp::Segment(_) => "image segment",
                ImageOp::Gradmap(_) => "image gradmap",
            },
            Command::Experiment(a) => match a.kind {
                ExperimentKind::Sweep(_) => "experiment sweep",
                ExperimentKind::Cs(_) => "experiment cs",
                ExperimentKind::Rip(_) => "experiment rip",
            },
            Command::Replay(_) => "replay",
        }
    }
}
