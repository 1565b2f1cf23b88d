//! Command-line and config-file options. Every subcommand's options double as
//! the matching config-file section, so both share one definition.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "onebit", version, about = "Experiments for one-bit scheduling advice")]
pub struct Cli {
    /// TOML config file. Flags override values from the file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed. Falls back to ONEBIT_SEED, then the config file, then 1.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write results here instead of stdout.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Repeat for more logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean sojourn over a (lambda, threshold, policy) grid.
    Sweep(SweepArgs),
    /// Single queue, exponential service.
    Table1(TableArgs),
    /// Single queue, Weibull service.
    Table2(TableArgs),
    /// Cluster rows: simulation and mean-field.
    Table3(TableArgs),
    /// Optimal threshold per lambda.
    OptThreshold(OptArgs),
    /// Mean-field fixed point for the two-choice cluster.
    Meanfield(MeanfieldArgs),
    /// One cluster simulation.
    SimCluster(ClusterArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleArg {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistArg {
    Exponential,
    Weibull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Exponential,
    Perfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceArg {
    Analytic,
    Simulation,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    ThresholdNonpreempt,
    ThresholdPreempt,
    PredictionNonpreempt,
    PredictionPreempt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterPolicyArg {
    OneBit,
    OneChoice,
    ShorterOfTwo,
    LeastLoadedSrpt,
}

/// A list of values: `0.5,0.8,0.9` or an inclusive range `start:stop:count`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Spec(String),
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        match self {
            Grid::Values(v) => Ok(v.clone()),
            Grid::Spec(s) => parse_grid(s),
        }
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_grid(s).map(Grid::Values)
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [single] => single.split(',').map(num).collect(),
        [start, stop, count] => {
            let (a, b) = (num(start)?, num(stop)?);
            let n: usize = count.trim().parse().map_err(|_| format!("'{count}' is not a count"))?;
            match n {
                0 => Err("range needs a positive count".into()),
                1 => Ok(vec![a]),
                _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
            }
        }
        _ => Err(format!("'{s}' is neither a list nor start:stop:count")),
    }
}

/// Threshold grid, or `optimal` for the per-lambda optimum.
#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds {
    Optimal,
    Grid(Grid),
}

impl FromStr for Thresholds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim() == "optimal" {
            Ok(Thresholds::Optimal)
        } else {
            s.parse().map(Thresholds::Grid)
        }
    }
}

impl<'de> Deserialize<'de> for Thresholds {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Grid::deserialize(d)? {
            Grid::Spec(s) if s.trim() == "optimal" => Ok(Thresholds::Optimal),
            g => Ok(Thresholds::Grid(g)),
        }
    }
}

/// Fills every unset field of `$a` from `$b`.
macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),*) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f; } )*
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TableArgs {
    /// desk (minutes) or full (the published run sizes).
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
}

impl TableArgs {
    pub fn merge(mut self, file: Self) -> Self {
        merge_fields!(self, file; scale);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub dist: Option<DistArg>,
    /// Arrival rates, e.g. `0.5,0.9` or `0.1:0.9:9`.
    #[arg(long)]
    pub lambda: Option<Grid>,
    /// Thresholds as a grid, or `optimal`.
    #[arg(long)]
    pub threshold: Option<Thresholds>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub policy: Option<Vec<PolicyArg>>,
    /// Prediction model for the prediction-* policies.
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
    /// Replications per simulated cell; defaults to the scale's count.
    #[arg(long)]
    pub reps: Option<usize>,
}

impl SweepArgs {
    pub fn merge(mut self, file: Self) -> Self {
        merge_fields!(self, file; dist, lambda, threshold, policy, model, source, scale, reps);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct OptArgs {
    #[arg(long, value_enum)]
    pub dist: Option<DistArg>,
    #[arg(long)]
    pub lambda: Option<Grid>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub policy: Option<Vec<PolicyArg>>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
}

impl OptArgs {
    pub fn merge(mut self, file: Self) -> Self {
        merge_fields!(self, file; dist, lambda, policy, model);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct MeanfieldArgs {
    /// Probability a long job is labeled short.
    #[arg(long)]
    pub q1: Option<f64>,
    /// Probability a short job is labeled long.
    #[arg(long)]
    pub q2: Option<f64>,
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub mean1: Option<f64>,
    #[arg(long)]
    pub mean2: Option<f64>,
    /// Initial truncation of both queue-length axes.
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub max_truncation: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Derivative max-norm at which to stop; 0 runs the whole horizon.
    #[arg(long)]
    pub stop_tol: Option<f64>,
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
    /// Write the fixed-point occupancy vector here as CSV.
    #[arg(long)]
    pub state_out: Option<PathBuf>,
}

impl MeanfieldArgs {
    pub fn merge(mut self, file: Self) -> Self {
        merge_fields!(self, file; q1, q2, d, lambda1, lambda2, mean1, mean2, truncation, max_truncation,
            dt, horizon, stop_tol, scale, state_out);
        self
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ClusterArgs {
    #[arg(long, value_enum)]
    pub policy: Option<ClusterPolicyArg>,
    /// Queues sampled per arrival (one-bit and least-loaded-srpt).
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long)]
    pub q1: Option<f64>,
    #[arg(long)]
    pub q2: Option<f64>,
    /// Number of queues.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub mean1: Option<f64>,
    #[arg(long)]
    pub mean2: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Defaults to 10% of the horizon.
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
}

impl ClusterArgs {
    pub fn merge(mut self, file: Self) -> Self {
        merge_fields!(self, file; policy, d, q1, q2, n, lambda1, lambda2, mean1, mean2, horizon, warmup, reps, scale);
        self
    }
}

/// Top-level layout of the TOML config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub table: TableArgs,
    pub sweep: SweepArgs,
    pub opt_threshold: OptArgs,
    pub meanfield: MeanfieldArgs,
    pub sim_cluster: ClusterArgs,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.5, 0.9").unwrap(), vec![0.5, 0.9]);
        assert_eq!(parse_grid("0:1:5").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("2:3:1").unwrap(), vec![2.0]);
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("1:2").is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!("optimal".parse::<Thresholds>().unwrap(), Thresholds::Optimal);
        let t: Thresholds = "1,2".parse().unwrap();
        assert_eq!(t, Thresholds::Grid(Grid::Values(vec![1.0, 2.0])));
    }

    #[test]
    fn file_sections() {
        let cfg: FileConfig = toml::from_str(
            r#"
            seed = 9
            format = "json"
            [sweep]
            dist = "weibull"
            lambda = [0.5, 0.9]
            threshold = "optimal"
            policy = ["threshold-preempt"]
            [sim-cluster]
            policy = "one-bit"
            n = 50
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.format, Some(Format::Json));
        assert_eq!(cfg.sweep.threshold, Some(Thresholds::Optimal));
        assert_eq!(cfg.sweep.lambda.unwrap().values().unwrap(), vec![0.5, 0.9]);
        assert_eq!(cfg.sim_cluster.n, Some(50));
    }

    #[test]
    fn string_grid_in_file() {
        let cfg: FileConfig = toml::from_str("[sweep]\nthreshold = \"0:2:3\"").unwrap();
        match cfg.sweep.threshold.unwrap() {
            Thresholds::Grid(g) => assert_eq!(g.values().unwrap(), vec![0.0, 1.0, 2.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("[sweep]\nlambdas = [0.5]").is_err());
        assert!(toml::from_str::<FileConfig>("speed = 3").is_err());
    }

    #[test]
    fn flags_win() {
        let flags = SweepArgs {
            reps: Some(3),
            ..Default::default()
        };
        let file = SweepArgs {
            reps: Some(7),
            dist: Some(DistArg::Weibull),
            ..Default::default()
        };
        let merged = flags.merge(file);
        assert_eq!(merged.reps, Some(3));
        assert_eq!(merged.dist, Some(DistArg::Weibull));
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from([
            "onebit",
            "sweep",
            "--policy",
            "threshold-preempt,prediction-nonpreempt",
            "--threshold",
            "optimal",
            "--seed",
            "4",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(4));
        match cli.command {
            Command::Sweep(a) => {
                assert_eq!(a.policy.unwrap().len(), 2);
                assert_eq!(a.threshold, Some(Thresholds::Optimal));
            }
            other => panic!("{other:?}"),
        }
    }
}
