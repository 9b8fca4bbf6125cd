//! Library half of the `ghforest` command-line tool.
//!
//! Every subcommand is a plain function returning a serializable report, so
//! tests can drive the same code paths as the binary.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ghforest::{BuildMethod, Metric, Pruning};
use serde::Serialize;

pub mod commands;
pub mod report;

pub use commands::{cmd_bench, cmd_build, cmd_gen, cmd_query, cmd_verify};

/// Environment variables mirror flags under this prefix, e.g. `GHF_EPSILON`.
pub const ENV_PREFIX: &str = "GHF_";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("verification failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<ghforest::Error> for CliError {
    fn from(e: ghforest::Error) -> Self {
        use ghforest::Error as E;
        match e {
            E::InvalidParameter { .. } | E::UnknownMetric(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ghforest", version, about = "Overlap-aware GH-tree forests for kNN search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded Gaussian-blob dataset (and optionally queries) as CSV.
    Gen(GenArgs),
    /// Cluster, plan and build a forest; write the artifact and a JSON report.
    Build(BuildArgs),
    /// Run kNN queries against a saved forest.
    Query(QueryArgs),
    /// Build every method on one input and compare query costs.
    Bench(BenchArgs),
    /// Check geometry and search against the brute-force oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PruningArg {
    Off,
    Covering,
    Hyperplane,
}

impl From<PruningArg> for Pruning {
    fn from(p: PruningArg) -> Self {
        match p {
            PruningArg::Off => Pruning::Off,
            PruningArg::Covering => Pruning::CoveringRadius,
            PruningArg::Hyperplane => Pruning::CoveringAndHyperplane,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ClusterParams {
    /// DBSCAN neighbourhood radius.
    #[arg(long, env = "GHF_EPSILON")]
    pub epsilon: Option<f64>,
    /// DBSCAN core-point threshold, counting the point itself.
    #[arg(long, env = "GHF_MINPTS")]
    pub minpts: Option<usize>,
    #[arg(long = "xi-min", env = "GHF_XI_MIN", default_value_t = 0.4)]
    pub xi_min: f64,
    #[arg(long = "xi-max", env = "GHF_XI_MAX", default_value_t = 0.8)]
    pub xi_max: f64,
    #[arg(long, env = "GHF_METRIC", default_value = "euclidean")]
    pub metric: Metric,
    #[arg(long, env = "GHF_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, env = "GHF_OUT")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub points: usize,
    #[arg(long, default_value_t = 3)]
    pub clusters: usize,
    #[arg(long = "dim", default_value_t = 5)]
    pub dimension: usize,
    #[arg(long, default_value_t = 50.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, env = "GHF_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also write fresh in-cluster queries here.
    #[arg(long = "queries-out")]
    pub queries_out: Option<PathBuf>,
    #[arg(long = "num-queries", default_value_t = 100)]
    pub num_queries: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    #[arg(long, env = "GHF_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "GHF_METHOD", default_value = "vbm")]
    pub method: BuildMethod,
    #[command(flatten)]
    pub params: ClusterParams,
    /// Forest artifact path.
    #[arg(long, env = "GHF_OUT")]
    pub out: PathBuf,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    #[arg(long, env = "GHF_FOREST")]
    pub forest: PathBuf,
    #[arg(long, env = "GHF_QUERIES")]
    pub queries: PathBuf,
    #[arg(long, env = "GHF_K", value_delimiter = ',', default_value = "10")]
    pub k: Vec<usize>,
    /// Add recall@k against a linear scan.
    #[arg(long, env = "GHF_ORACLE")]
    pub oracle: bool,
    #[arg(long, value_enum, default_value_t = PruningArg::Covering)]
    pub pruning: PruningArg,
    /// Search selected trees one after another.
    #[arg(long)]
    pub sequential: bool,
    /// JSON report path; stdout when absent.
    #[arg(long, env = "GHF_OUT")]
    pub out: Option<PathBuf>,
    /// Raw per-query rows as CSV.
    #[arg(long = "rows-csv")]
    pub rows_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, env = "GHF_INPUT")]
    pub input: PathBuf,
    #[command(flatten)]
    pub params: ClusterParams,
    #[arg(long, env = "GHF_K", value_delimiter = ',', default_value = "5,10,15,20,50,100")]
    pub k: Vec<usize>,
    /// Query CSV; when absent, `--num-queries` dataset objects are drawn
    /// with `--seed`.
    #[arg(long, env = "GHF_QUERIES")]
    pub queries: Option<PathBuf>,
    #[arg(long = "num-queries", default_value_t = 100)]
    pub num_queries: usize,
    #[arg(long, value_delimiter = ',', default_value = "vbm,dbm,obm,baseline")]
    pub methods: Vec<BuildMethod>,
    #[arg(long, env = "GHF_ORACLE")]
    pub oracle: bool,
    #[arg(long, value_enum, default_value_t = PruningArg::Covering)]
    pub pruning: PruningArg,
    #[arg(long, env = "GHF_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Dataset for the search checks; uniform random points when absent.
    #[arg(long, env = "GHF_INPUT")]
    pub input: Option<PathBuf>,
    #[arg(long, env = "GHF_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Random partial-overlap ball pairs per dimension.
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    #[arg(long = "mc-samples", default_value_t = 1_000_000)]
    pub mc_samples: u64,
    #[arg(long = "num-queries", default_value_t = 100)]
    pub num_queries: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,50")]
    pub k: Vec<usize>,
    #[arg(long, env = "GHF_OUT")]
    pub out: Option<PathBuf>,
}

pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult<()> {
    let io_err = |e: io::Error| CliError::Data(e.to_string());
    let mut out: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(&args).map(|_| ()),
        Command::Build(args) => {
            let report = cmd_build(&args)?;
            write_json(&report, args.stats.as_deref())
        }
        Command::Query(args) => {
            let report = cmd_query(&args)?;
            if let Some(path) = &args.rows_csv {
                report::write_rows_csv(&report.queries, path)?;
            }
            write_json(&report, args.out.as_deref())
        }
        Command::Bench(args) => {
            let report = cmd_bench(&args)?;
            write_json(&report, args.out.as_deref())
        }
        Command::Verify(args) => {
            let report = cmd_verify(&args)?;
            write_json(&report, args.out.as_deref())?;
            let failed: Vec<_> = report
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Failed(failed.join(", ")))
            }
        }
    }
}
