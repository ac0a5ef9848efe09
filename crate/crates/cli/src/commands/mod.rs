mod fixtures;
mod graph;
mod learn;
mod text;

use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use credigraph_core::degree::Comparison;
use credigraph_core::labels::Target;

use crate::config::{parse_fanouts, parse_split, Config};

pub const RETENTION_FORMAT: &str = "CGRETAIN1";
pub const STATS_FORMAT: &str = "CGSTATS1";
pub const DIFF_FORMAT: &str = "CGDIFF1";
pub const LABELS_FORMAT: &str = "CGLABELS1";
pub const TEXT_REPORT_FORMAT: &str = "CGTXTREPORT1";
pub const EMBED_REPORT_FORMAT: &str = "CGEMBREPORT1";
pub const REPORT_FORMAT: &str = "CGREPORT1";
pub const RESULTS_FORMAT: &str = "CGRESULTS1";
pub const GNN_INPUTS_FORMAT: &str = "CGGNNIN1";

pub struct Context {
    pub config: Config,
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic WAT/WET corpus, label file and ground truth.
    GenFixtures(GenFixturesArgs),
    /// Build a snapshot graph (dictionary, edges, degrees) from WAT archives.
    BuildGraph(BuildGraphArgs),
    /// Keep nodes whose raw total degree passes a threshold.
    Filter(FilterArgs),
    /// Structural statistics of a snapshot.
    Stats(StatsArgs),
    /// Representative per-domain text from WET archives.
    ExtractText(ExtractTextArgs),
    /// Embed text bundles into a CGEMB1 store (plus its truncated form).
    Embed(EmbedArgs),
    /// Attach credibility labels to a snapshot's nodes.
    JoinLabels(JoinLabelsArgs),
    /// Stratified train/validation/test split of labelled nodes.
    Split(SplitArgs),
    /// Compare two snapshots by node overlap and out-degree change.
    Diff(DiffArgs),
    /// Train the MLP regressor and the mean baseline on embeddings.
    TrainMlp(TrainMlpArgs),
    /// Prediction plots and the input manifest for graph-model training.
    Export(ExportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenFixturesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub domains: usize,
    #[arg(long, default_value_t = 10_000)]
    pub links: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Records per archive file.
    #[arg(long, default_value_t = 250)]
    pub records_per_file: usize,
    /// First day of the synthetic crawl (YYYY-MM-DD).
    #[arg(long, default_value = "2024-12-02")]
    pub crawl_start: String,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildGraphArgs {
    /// WAT files or directories containing them.
    #[arg(long, required = true, num_args = 1..)]
    pub wat: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "snapshot")]
    pub snapshot_id: String,
    /// Crawl start date; defaults to the WARC-Date of the first record.
    #[arg(long)]
    pub crawl_start: Option<String>,
    /// Archive files per batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Count image, script, form and head links as well as anchors.
    #[arg(long)]
    pub include_all_links: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonArg {
    /// degree > threshold
    Greater,
    /// degree >= threshold
    GreaterOrEqual,
}

impl From<ComparisonArg> for Comparison {
    fn from(c: ComparisonArg) -> Self {
        match c {
            ComparisonArg::Greater => Comparison::Greater,
            ComparisonArg::GreaterOrEqual => Comparison::GreaterOrEqual,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FilterArgs {
    /// Manifest of the raw snapshot.
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub threshold: Option<i64>,
    #[arg(long, value_enum, default_value_t = ComparisonArg::Greater)]
    pub comparison: ComparisonArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// Snapshot manifest to summarise.
    #[arg(long, required_unless_present = "nodes", conflicts_with_all = ["nodes", "edges"])]
    pub snapshot: Option<PathBuf>,
    /// Only evaluate the mean-degree and density formulas for these counts.
    #[arg(long, requires = "edges")]
    pub nodes: Option<u64>,
    #[arg(long, requires = "nodes")]
    pub edges: Option<u64>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractTextArgs {
    /// WET files or directories containing them.
    #[arg(long, required = true, num_args = 1..)]
    pub wet: Vec<PathBuf>,
    /// Only domains of this snapshot get bundles.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// JSON map of node key to home-page text, used for domains without
    /// crawled text.
    #[arg(long)]
    pub homepages: Option<PathBuf>,
    #[arg(long)]
    pub max_chars: Option<usize>,
    /// Also export the bundles as JSON lines for external embedding jobs.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderArg {
    /// Deterministic hash-seeded vectors.
    Pseudo,
    /// Precomputed vectors from a JSON-lines file of `{"node", "vector"}`.
    Jsonl,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub bundles: PathBuf,
    #[arg(long, value_enum, default_value_t = ProviderArg::Pseudo)]
    pub provider: ProviderArg,
    /// Vector file for `--provider jsonl`.
    #[arg(long, required_if_eq("provider", "jsonl"))]
    pub vectors: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Truncated dimension written alongside the full store.
    #[arg(long)]
    pub mrl: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct JoinLabelsArgs {
    /// CSV with `domain`, `pc1` and `mbfc` columns.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    /// Joined labels written by `join-labels`.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "pc1")]
    pub target: Target,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ratios such as `60/20/20`.
    #[arg(long, value_parser = parse_split)]
    pub ratios: Option<[f64; 3]>,
    /// Only split nodes that have a row in this embedding store.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DiffArgs {
    #[arg(long)]
    pub prev: PathBuf,
    #[arg(long)]
    pub next: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainMlpArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Must match the split's target when given.
    #[arg(long)]
    pub target: Option<Target>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    /// Output directory of `train-mlp`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Snapshot the graph model trains on.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Neighbours sampled per hop, e.g. `50,50,50`.
    #[arg(long, value_parser = parse_fanouts)]
    pub fanouts: Option<Vec<usize>>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(command: Command, ctx: &Context) -> anyhow::Result<()> {
    match command {
        Command::GenFixtures(a) => fixtures::gen_fixtures(a, ctx),
        Command::BuildGraph(a) => graph::build_graph(a, ctx),
        Command::Filter(a) => graph::filter(a, ctx),
        Command::Stats(a) => graph::stats(a, ctx),
        Command::Diff(a) => graph::diff(a, ctx),
        Command::ExtractText(a) => text::extract_text(a, ctx),
        Command::Embed(a) => text::embed(a, ctx),
        Command::JoinLabels(a) => learn::join_labels(a, ctx),
        Command::Split(a) => learn::split(a, ctx),
        Command::TrainMlp(a) => learn::train_mlp(a, ctx),
        Command::Export(a) => learn::export(a, ctx),
    }
}

/// Settings snapshot recorded in a job manifest: the command's arguments
/// plus the resolved values they were combined with.
pub fn settings(args: &impl Serialize, resolved: serde_json::Value) -> serde_json::Value {
    serde_json::json!({ "args": args, "resolved": resolved })
}
