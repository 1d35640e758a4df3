use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypernet::models::Family;

#[derive(Debug, Parser)]
#[command(name = "hypernet", version, about = "Hypergraph neural network experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and print a summary line.
    Run(RunArgs),
    /// Train every family at every depth and write a CSV report.
    DepthSweep(DepthSweepArgs),
    /// Resample the training split at several label ratios and write a CSV report.
    RatioSweep(RatioSweepArgs),
    /// Write a synthetic dataset to disk.
    GenSynthetic(GenSyntheticArgs),
    /// Load a dataset and print its statistics.
    ValidateDataset(ValidateDatasetArgs),
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Dataset manifest (or the directory holding manifest.json).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Synthetic spec as a JSON file, or `default` for the built-in benchmark.
    #[arg(long, value_name = "FILE|default")]
    pub synthetic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum LabelMode {
    Full,
    Balanced,
}

impl LabelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelMode::Full => "full",
            LabelMode::Balanced => "balanced",
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model and optimizer settings shared by every subcommand that trains.
#[derive(Debug, Clone, Args)]
pub struct Settings {
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// Test accuracy is measured every this many epochs and at the last one;
    /// best_acc is the best of those measurements.
    #[arg(long, default_value_t = 10)]
    pub eval_every: usize,
    /// Initial-residual weight for residual families.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Identity-mapping scale: beta_l = min(1, lambda / l).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum, default_value_t = LabelMode::Full)]
    pub label_mode: LabelMode,
    /// Training labels per class in balanced mode (default: smallest class count).
    #[arg(long)]
    pub per_class: Option<usize>,
}

/// `family` or `family:depth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilySpec {
    pub family: Family,
    pub depth: Option<usize>,
}

impl FromStr for FamilySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, depth) = match s.split_once(':') {
            Some((name, d)) => {
                let d = d.parse().map_err(|_| format!("invalid depth '{d}' in '{s}'"))?;
                (name, Some(d))
            }
            None => (s, None),
        };
        let family = name.parse::<Family>().map_err(|e| e.to_string())?;
        Ok(Self { family, depth })
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, value_parser = parse_family, default_value = "hgnn")]
    pub family: Family,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, env = "HYPERNET_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub settings: Settings,
    /// Also write the result as a one-row CSV report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill the runtime_s column.
    #[arg(long)]
    pub timing: bool,
}

/// Options common to both sweeps.
#[derive(Debug, Clone, Args)]
pub struct SweepCommon {
    #[command(flatten)]
    pub source: Source,
    /// First seed; a sweep uses `seed, seed + 1, ...`.
    #[arg(long, env = "HYPERNET_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub settings: Settings,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Runs trained in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,
    /// Fill the runtime_s column (makes the CSV machine-dependent).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DepthSweepArgs {
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_family,
        default_value = "hgnn,multihgnn,reshgnn,resmultihgnn"
    )]
    pub family: Vec<Family>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
    pub depths: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[command(flatten)]
    pub common: SweepCommon,
}

#[derive(Debug, Clone, Args)]
pub struct RatioSweepArgs {
    /// Families, each optionally pinned to a depth as `family:depth`.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "hgnn,multihgnn,reshgnn,resmultihgnn"
    )]
    pub family: Vec<FamilySpec>,
    /// Depth for families given without one.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.4,0.6,0.8")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub seeds: usize,
    #[command(flatten)]
    pub common: SweepCommon,
}

#[derive(Debug, Clone, Args)]
pub struct GenSyntheticArgs {
    #[arg(long, value_name = "FILE|default")]
    pub synthetic: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing dataset in `out`.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateDatasetArgs {
    #[arg(long)]
    pub dataset: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn family_specs() {
        let s: FamilySpec = "resmultihgnn:8".parse().unwrap();
        assert_eq!(s.family, Family::ResMultiHgnn);
        assert_eq!(s.depth, Some(8));
        assert_eq!("HGNN".parse::<FamilySpec>().unwrap().depth, None);
        assert!("gcn".parse::<FamilySpec>().is_err());
        assert!("hgnn:x".parse::<FamilySpec>().is_err());
    }

    #[test]
    fn source_is_exclusive_and_required() {
        assert!(Cli::try_parse_from(["hypernet", "run"]).is_err());
        assert!(Cli::try_parse_from([
            "hypernet", "run", "--dataset", "a", "--synthetic", "default"
        ])
        .is_err());
        let cli = Cli::try_parse_from(["hypernet", "depth-sweep", "--synthetic", "default"]).unwrap();
        match cli.command {
            Command::DepthSweep(a) => {
                assert_eq!(a.depths, vec![2, 4, 8, 16, 32, 64]);
                assert_eq!(a.family, Family::ALL.to_vec());
                assert_eq!(a.common.jobs, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ratio_sweep_defaults() {
        let cli = Cli::try_parse_from(["hypernet", "ratio-sweep", "--synthetic", "default"]).unwrap();
        match cli.command {
            Command::RatioSweep(a) => {
                assert_eq!(a.ratios, vec![0.05, 0.1, 0.2, 0.4, 0.6, 0.8]);
                assert_eq!(a.seeds, 8);
            }
            other => panic!("{other:?}"),
        }
    }
}
