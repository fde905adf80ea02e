use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use idgap::metrics::{ThresholdGrid, DEFAULT_GRID_POINTS};
use idgap::{Error, Result, ScoreScale};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "idgap",
    version,
    about = "Identity overfitting and mode-collapse measurement"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// FAR curves (all-pairs and nearest-neighbour) and the overfit report.
    Far(FarArgs),
    /// FRR curve and operating points of a labeled set.
    Frr(VerifyArgs),
    /// ROC (FAR and FRR per threshold) of a labeled set.
    Roc(VerifyArgs),
    /// Train a paired GAN from a JSON config.
    Train(TrainArgs),
    /// Sample identity sets from a trained checkpoint.
    Gen(GenArgs),
    /// Write synthetic identity worlds from a JSON spec.
    Synth(SynthArgs),
    /// Overfit / collapse report only.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Non-mated pairs within the real set.
    Within,
    /// Every fake row against every real row.
    Between,
    /// Nearest-neighbour curves only.
    Nn,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct EvalArgs {
    /// Threshold grid as min:max:points; defaults to the observed score range.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Score scale alpha:beta applied to cosines.
    #[arg(long, allow_hyphen_values = true, default_value = "1:0")]
    pub scale: String,
    /// Engine worker threads; defaults to the available cores.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FarArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub fake: Option<PathBuf>,
    /// Labels file for the real set, overriding any sidecar.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Restrict to one comparison; without it every comparison is written.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Also write nearest-neighbour curves.
    #[arg(long)]
    pub nn: bool,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Labeled set providing mated and non-mated pairs.
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Report FRR where non-mated FAR reaches this target.
    #[arg(long)]
    pub target_far: Option<f64>,
    /// Report FRR at this score threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub fake: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// JSON training config; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config step count.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Identities to generate.
    #[arg(long)]
    pub k: usize,
    /// Rows per identity.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// JSON synthetic world spec.
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the mixture seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_scale(text: &str) -> Result<ScoreScale> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Invalid(format!("--scale expects alpha:beta, got {text:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let alpha = parts[0].trim().parse().map_err(|_| bad())?;
    let beta = parts[1].trim().parse().map_err(|_| bad())?;
    ScoreScale::new(alpha, beta)
}

/// `min:max:points`, or `min:max` with the default point count.
pub fn parse_grid(text: &str) -> Result<ThresholdGrid> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Invalid(format!("--grid expects min:max:points, got {text:?}"));
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let min: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let max: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let points = match parts.get(2) {
        Some(p) => p.trim().parse().map_err(|_| bad())?,
        None => DEFAULT_GRID_POINTS,
    };
    ThresholdGrid::uniform(min, max, points)
}
