use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use infoalign_core::config::CONFIG_ENV;

#[derive(Debug, Parser)]
#[command(name = "infoalign", version, about = "Context-graph pretraining and evaluation for molecular representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every subcommand accepts.
#[derive(Debug, Args)]
pub struct Common {
    /// Master seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON run config. Falls back to the file named by the environment variable.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Output file or directory; stdout when a single file is omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic context graph with planted cluster structure.
    Synth(SynthArgs),
    /// Build a context graph from node and edge tables.
    BuildGraph(BuildGraphArgs),
    /// Sample weighted walks and print their nodes and weights.
    Walk(WalkArgs),
    /// Morgan fingerprints, one hex line per SMILES line.
    Fingerprint(FingerprintArgs),
    /// Pretrain the encoder, optionally sweeping beta or walk length.
    Pretrain(PretrainArgs),
    /// Write mean embeddings for molecules.
    Embed(EmbedArgs),
    /// Probe frozen embeddings against downstream labels.
    Eval(EvalArgs),
    /// Rank morphology candidates for query molecules by decoder likelihood.
    Match(MatchArgs),
    /// Check the ordering of mutual-information bounds on finite joints.
    MiBench(MiBenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub molecules_per_cluster: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub morphology_dim: Option<usize>,
    #[arg(long)]
    pub expression_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Stats JSON path; defaults to the graph path with a `.stats.json` suffix.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Start molecule ids; every molecule when omitted.
    #[arg(long, value_delimiter = ',')]
    pub starts: Vec<String>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub walks: Option<usize>,
    #[arg(long)]
    pub uniform: bool,
}

#[derive(Debug, Args)]
pub struct FingerprintArgs {
    #[command(flatten)]
    pub common: Common,
    /// One SMILES per line; `#` lines are skipped.
    pub input: PathBuf,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub nbits: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Walk length in nodes, start included.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Continue a run from its checkpoint up to `--epochs` in total.
    #[arg(long, conflicts_with_all = ["sweep_beta", "sweep_length"])]
    pub resume: Option<PathBuf>,
    /// One run per beta value, each in its own subdirectory.
    #[arg(long, value_delimiter = ',', conflicts_with = "sweep_length")]
    pub sweep_beta: Vec<f64>,
    /// One run per walk length, each in its own subdirectory.
    #[arg(long, value_delimiter = ',')]
    pub sweep_length: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Embed every molecule node of this graph.
    #[arg(long, conflicts_with = "smiles")]
    pub graph: Option<PathBuf>,
    /// Lines of `smiles` or `id<TAB>smiles`.
    #[arg(long)]
    pub smiles: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Hidden width of a one-layer MLP probe; linear when omitted.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Also write the trained probe head as JSON.
    #[arg(long)]
    pub save_head: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Lines of `smiles` or `id<TAB>smiles`.
    #[arg(long)]
    pub queries: PathBuf,
    /// Candidate morphology features: `id<TAB>values...`.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Lines of `query_id<TAB>candidate_id`.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub ks: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct MiBenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Exact enumeration over each joint (the default).
    #[arg(long, conflicts_with = "trials")]
    pub exact: bool,
    /// Monte Carlo estimates with this many samples instead.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub joints: Option<usize>,
}
