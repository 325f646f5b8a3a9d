use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "randquant",
    version,
    about = "Random-threshold scalar quantizer analysis"
)]
pub struct Cli {
    /// TOML file with default parameter values; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// Run seed (falls back to RANDQUANT_SEED, then 7).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McTarget {
    Distortion,
    Rate,
    Spacing,
    #[value(name = "two_step", alias = "two-step")]
    #[serde(rename = "two_step", alias = "two-step")]
    TwoStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McMode {
    RaoBlackwell,
    Raw,
}

/// Which closed form the two-step oracle is judged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    ClosedForm,
    Exact,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distortion, rate and penalty factors for a range of K.
    Table {
        #[arg(long = "k-min", alias = "K-min")]
        k_min: Option<u64>,
        #[arg(long = "k-max", alias = "K-max")]
        k_max: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Penalty factors against K with the asymptote, ready for plotting.
    Curve {
        #[arg(long = "k-max", alias = "K-max")]
        k_max: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo check of a closed form.
    Mc {
        /// distortion, rate, spacing or two_step (may come from --config).
        #[arg(value_enum)]
        target: Option<McTarget>,
        #[arg(long = "K", alias = "k")]
        k: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<McMode>,
        /// Source samples per threshold draw in raw mode.
        #[arg(long)]
        raw_samples: Option<u64>,
        /// Moment order for the spacing target.
        #[arg(long)]
        p: Option<u32>,
        /// Histogram bins for the spacing target.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        delta0: Option<f64>,
        #[arg(long)]
        delta1: Option<f64>,
        #[arg(long, value_enum)]
        reference: Option<Reference>,
        #[command(flatten)]
        common: Common,
    },
    /// Offset-averaged metrics of a dithered quantizer bank.
    Dithered {
        #[arg(long = "K", alias = "k")]
        k: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        offset_trials: Option<u64>,
        /// Sweep K = 1..=k-max instead of a single K.
        #[arg(long = "k-max", alias = "K-max")]
        k_max: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Closed forms for two quantizers with unequal steps.
    TwoStep {
        #[arg(long)]
        delta0: Option<f64>,
        #[arg(long)]
        delta1: Option<f64>,
        /// Per-component step of a rotated frame (with --theta).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Distortion, rate and penalty of the rotated two-component frame.
    Frame {
        #[arg(long)]
        theta_steps: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the full invariant suite.
    Check {
        /// Override the Euler-Mascheroni constant (mutation testing).
        #[arg(long, hide = true)]
        euler_gamma: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Table { common, .. }
            | Command::Curve { common, .. }
            | Command::Mc { common, .. }
            | Command::Dithered { common, .. }
            | Command::TwoStep { common, .. }
            | Command::Frame { common, .. }
            | Command::Check { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Table { .. } => "table",
            Command::Curve { .. } => "curve",
            Command::Mc { .. } => "mc",
            Command::Dithered { .. } => "dithered",
            Command::TwoStep { .. } => "two-step",
            Command::Frame { .. } => "frame",
            Command::Check { .. } => "check",
        }
    }
}

/// Parameter defaults loaded from a TOML file. Keys match the names recorded
/// in a run's `parameters`, so a manifest can be replayed as a config.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub k_min: Option<u64>,
    pub k_max: Option<u64>,
    #[serde(rename = "K")]
    pub k: Option<u64>,
    pub trials: Option<u64>,
    pub mode: Option<McMode>,
    pub raw_samples: Option<u64>,
    pub p: Option<u32>,
    pub bins: Option<usize>,
    pub delta: Option<f64>,
    pub delta0: Option<f64>,
    pub delta1: Option<f64>,
    pub reference: Option<Reference>,
    pub offset_trials: Option<u64>,
    pub theta: Option<f64>,
    pub theta_steps: Option<u64>,
    pub target: Option<McTarget>,
    pub euler_gamma: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub const SEED_ENV: &str = "RANDQUANT_SEED";

/// Seed precedence: flag, config file, `RANDQUANT_SEED`, built-in default.
pub fn resolve_seed(flag: Option<u64>, config: &FileConfig) -> anyhow::Result<u64> {
    if let Some(s) = flag.or(config.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v} is not an unsigned integer")),
        Err(_) => Ok(randquant::DEFAULT_SEED),
    }
}
