mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "cobweb", version, about = "Hierarchical prototype-tree retrieval over dense embeddings")]
pub struct Cli {
    /// Flat `key = value` config file; flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a whitening transform on a corpus, or apply a saved one.
    Whiten(WhitenArgs),
    /// Build a prototype tree from an embedding corpus.
    Build(BuildArgs),
    /// Rank documents for every query and print TSV.
    Query(QueryArgs),
    /// Score rankings against qrels.
    Eval(EvalArgs),
    /// Time each method on synthetic corpora of growing size.
    Bench(BenchArgs),
    /// Render a tree as JSON or Graphviz DOT.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["corpus", "transform"])))]
pub struct WhitenArgs {
    /// Fit on this corpus; its whitened form goes to --out.
    #[arg(long, requires = "transform_out")]
    pub corpus: Option<PathBuf>,
    /// Where to save the fitted transform.
    #[arg(long, requires = "corpus")]
    pub transform_out: Option<PathBuf>,
    /// Also whiten these query embeddings with the fitted transform.
    #[arg(long, requires_all = ["corpus", "queries_out"])]
    pub queries: Option<PathBuf>,
    #[arg(long, requires = "queries")]
    pub queries_out: Option<PathBuf>,
    /// Apply a saved transform to --in instead of fitting.
    #[arg(long, requires = "input")]
    pub transform: Option<PathBuf>,
    #[arg(long = "in", value_name = "EMB", requires = "transform")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Cumulative explained-variance ratio that picks the kept dimensions.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Stop after PCA whitening.
    #[arg(long)]
    pub no_ica: bool,
    #[arg(long, conflicts_with = "no_ica")]
    pub ica_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Binary snapshot, or JSON when the name ends in `.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub variance_floor: Option<f64>,
    /// Insert documents in a seeded random order.
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
}

/// Where rankings come from, shared by `query` and `eval`.
#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).multiple(true).args(["tree", "corpus"])))]
pub struct SearchArgs {
    /// Saved tree for bfs and pathsum.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Corpus embeddings; required for dot, and builds a tree on the fly when --tree is absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: PathBuf,
    /// Whitening transform applied to the queries before search.
    #[arg(long)]
    pub transform: Option<PathBuf>,
    /// bfs, pathsum or dot.
    #[arg(long)]
    pub method: Option<String>,
    /// Pop budget for bfs.
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub include_leaf_score: bool,
    #[arg(long)]
    pub depth_normalize: bool,
    /// Used only when building a tree on the fly.
    #[arg(long)]
    pub variance_floor: Option<f64>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(short, long)]
    pub k: Option<usize>,
    /// Print each result's root-to-leaf path as `#` comment lines.
    #[arg(long)]
    pub explain: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Comma-separated cutoffs, e.g. `5,10`.
    #[arg(long)]
    pub cutoffs: Option<String>,
    /// linear or exponential.
    #[arg(long)]
    pub gain: Option<String>,
    /// Skip timing so the report is byte-stable.
    #[arg(long)]
    pub no_latency: bool,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated corpus sizes.
    #[arg(long, default_value = "1000,2000,4000")]
    pub sizes: String,
    /// Comma-separated methods.
    #[arg(long, default_value = "dot,pathsum,bfs")]
    pub methods: String,
    #[arg(long, default_value_t = 3)]
    pub trials: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub clusters: usize,
    #[arg(long = "n-queries", default_value_t = 100)]
    pub n_queries: usize,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub variance_floor: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// json or dot.
    #[arg(long, default_value = "json")]
    pub format: String,
    /// Deepest level rendered; the root is depth 0.
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Document texts (`doc_id<TAB>text`) attached to leaves.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };

    match commands::run(cli.command, &file) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(commands::Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
