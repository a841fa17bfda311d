use std::path::PathBuf;

use clap::{ArgAction, ArgGroup, Args, Parser, Subcommand};
use vfc_core::ablation::SweepVariable;
use vfc_core::candidates::Stages;
use vfc_core::evaluation::ClusterMode;
use vfc_core::index::{Probes, StructureKind};
use vfc_core::ingestion::CorpusFormat;
use vfc_core::scoring::FusionMode;

/// Open-vocabulary classification by retrieval over an embedded caption corpus.
#[derive(Parser, Debug)]
#[command(name = "vfc", version, about)]
pub struct Cli {
    /// `key = value` file consulted after flags and VFC_* variables
    #[arg(long, global = true, env = "VFC_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for partition initialization, stub vectors and synthetic data [default: 42]
    #[arg(long, global = true, env = "VFC_SEED")]
    pub seed: Option<u64>,

    /// Worker threads [default: available cores]
    #[arg(long, global = true, env = "VFC_THREADS")]
    pub threads: Option<usize>,

    /// Log to stderr; repeat for more detail
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate and convert corpora, embedding dumps and manifests
    Ingest(IngestArgs),
    /// Embed a caption corpus and write an index file
    BuildIndex(BuildIndexArgs),
    /// Classify queries against an index
    Classify(ClassifyArgs),
    /// Score predictions against ground truth
    Evaluate(EvaluateArgs),
    /// Part-of-speech statistics of a caption corpus
    Stats(StatsArgs),
    /// Sweep one parameter over a labeled benchmark
    Ablate(AblateArgs),
    /// Serve the embedding HTTP contract from deterministic vectors
    ServeStub(ServeStubArgs),
    /// Write a synthetic benchmark to a directory
    Synth(SynthCommand),
}

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Caption corpus, JSON lines or plain text
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,

    /// Corpus format [default: from the file extension]
    #[arg(long)]
    pub format: Option<CorpusFormat>,

    /// Abort on the first malformed line instead of skipping it
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ProviderArgs {
    /// Precomputed embedding store (.vfce)
    #[arg(long, env = "VFC_EMBEDDINGS", value_name = "PATH", conflicts_with = "remote")]
    pub embeddings: Option<PathBuf>,

    /// Base URL of a remote embedding service
    #[arg(long, env = "VFC_REMOTE_URL", value_name = "URL")]
    pub remote: Option<String>,

    /// Embedding dimension declared by the remote service
    #[arg(long, env = "VFC_DIM")]
    pub dim: Option<usize>,

    /// Remote request timeout in seconds [default: 30]
    #[arg(long, env = "VFC_TIMEOUT")]
    pub timeout: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ScoringArgs {
    /// Weight of the visual score [default: 0.7]
    #[arg(long, env = "VFC_ALPHA")]
    pub alpha: Option<f64>,

    /// Captions retrieved per query [default: 10]
    #[arg(long, env = "VFC_K")]
    pub k: Option<usize>,

    /// Partitions scanned per query, or `all` [default: 8]
    #[arg(long, env = "VFC_PROBES")]
    pub probes: Option<Probes>,

    /// Template with a `{}` placeholder applied to candidate names
    #[arg(long, env = "VFC_PROMPT")]
    pub prompt: Option<String>,

    /// Softmax axis: candidate or pair [default: candidate]
    #[arg(long, env = "VFC_FUSION")]
    pub fusion: Option<FusionMode>,

    /// Filtering stages: none, remove, remove+standardize or all [default: all]
    #[arg(long, env = "VFC_STAGES")]
    pub stages: Option<Stages>,

    /// Minimum occurrences for a candidate [default: 2]
    #[arg(long, env = "VFC_MIN_COUNT")]
    pub min_count: Option<u32>,

    /// Minimum token length [default: 3]
    #[arg(long, env = "VFC_MIN_WORD_LENGTH")]
    pub min_word_length: Option<usize>,

    /// Tab-separated word/POS lexicon replacing the bundled one
    #[arg(long, env = "VFC_LEXICON", value_name = "PATH")]
    pub lexicon: Option<PathBuf>,

    /// Stop-word list, one per line, replacing the bundled one
    #[arg(long, env = "VFC_STOP_WORDS", value_name = "PATH")]
    pub stop_words: Option<PathBuf>,

    /// Meta-word list, one per line, replacing the bundled one
    #[arg(long, env = "VFC_META_WORDS", value_name = "PATH")]
    pub meta_words: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["corpus", "vectors", "manifest"])))]
pub struct IngestArgs {
    /// Caption corpus to normalize into canonical JSON lines
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,

    /// `{"key", "vector"}` JSON lines to convert into a store file
    #[arg(long, value_name = "PATH")]
    pub vectors: Option<PathBuf>,

    /// Dataset manifest to validate against `--embeddings`
    #[arg(long, value_name = "PATH", requires = "embeddings")]
    pub manifest: Option<PathBuf>,

    /// Store that manifest references must resolve in
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,

    #[arg(long)]
    pub format: Option<CorpusFormat>,

    #[arg(long)]
    pub strict: bool,

    /// Unit-normalize imported vectors
    #[arg(long)]
    pub normalize: bool,

    #[arg(long, default_value = "-", value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildIndexArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    #[command(flatten)]
    pub provider: ProviderArgs,

    /// flat or partitioned [default: flat]
    #[arg(long, env = "VFC_STRUCTURE")]
    pub structure: Option<StructureKind>,

    /// Partition count for the partitioned structure [default: 16]
    #[arg(long, env = "VFC_PARTITIONS")]
    pub partitions: Option<usize>,

    /// Drop captions whose text repeats an earlier one
    #[arg(long)]
    pub dedup: bool,

    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("query_source").required(true).args(["queries", "manifest"])))]
pub struct ClassifyArgs {
    #[arg(long, value_name = "PATH")]
    pub index: PathBuf,

    /// JSON lines of `{"id", "embedding"}` or `{"id", "image_ref"}`
    #[arg(long, value_name = "PATH")]
    pub queries: Option<PathBuf>,

    /// Dataset manifest whose entries are classified
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    #[command(flatten)]
    pub provider: ProviderArgs,

    #[command(flatten)]
    pub scoring: ScoringArgs,

    #[arg(long, default_value = "-", value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// JSON lines with `id` and `label`, such as `classify` output
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,

    /// JSON lines `{"id", "label"}` or two-column TSV
    #[arg(long, value_name = "PATH")]
    pub truths: PathBuf,

    /// Cluster matching: auto, one-to-one or many-to-one [default: auto]
    #[arg(long, env = "VFC_MODE")]
    pub mode: Option<ClusterMode>,

    /// Text embedder for Semantic Similarity; omitted from the report when absent
    #[command(flatten)]
    pub provider: ProviderArgs,

    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,

    #[arg(long, default_value = "-", value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,

    #[arg(long, env = "VFC_LEXICON", value_name = "PATH")]
    pub lexicon: Option<PathBuf>,

    #[arg(long, env = "VFC_MIN_WORD_LENGTH")]
    pub min_word_length: Option<usize>,

    #[arg(long, default_value = "-", value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long, value_name = "PATH")]
    pub index: PathBuf,

    /// Dataset manifest supplying queries and truths
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,

    /// alpha, k, database, scoring-mode or filter-stages
    #[arg(long)]
    pub variable: SweepVariable,

    /// Comma-separated values [default: every `--database` name for the database sweep]
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,

    /// Alternative index for the database sweep, as NAME=PATH
    #[arg(long = "database", value_name = "NAME=PATH")]
    pub databases: Vec<String>,

    #[arg(long, env = "VFC_MODE")]
    pub mode: Option<ClusterMode>,

    /// Skip Semantic Similarity
    #[arg(long)]
    pub no_similarity: bool,

    #[command(flatten)]
    pub provider: ProviderArgs,

    #[command(flatten)]
    pub scoring: ScoringArgs,

    /// Also write the full per-point reports as JSON
    #[arg(long, value_name = "PATH")]
    pub reports: Option<PathBuf>,

    #[arg(long, default_value = "-", value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ServeStubArgs {
    #[arg(long, env = "VFC_BIND", default_value = "127.0.0.1:8080")]
    pub bind: String,

    /// Dimension of the hash vectors [default: 64]
    #[arg(long, env = "VFC_DIM")]
    pub dim: Option<usize>,

    /// Serve vectors from a store file instead of hashes
    #[arg(long, value_name = "PATH", conflicts_with = "synthetic")]
    pub embeddings: Option<PathBuf>,

    /// Serve the synthetic world that `synth` writes for the same settings
    #[arg(long)]
    pub synthetic: bool,

    #[command(flatten)]
    pub world: SynthArgs,

    /// Request handler threads [default: --threads or available cores]
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,

    #[arg(long)]
    pub captions: Option<usize>,

    #[arg(long = "num-queries")]
    pub num_queries: Option<usize>,

    /// Embedding dimension of the synthetic world [default: 128]
    #[arg(long = "world-dim")]
    pub world_dim: Option<usize>,

    /// Per-coordinate image noise [default: 0.1]
    #[arg(long)]
    pub noise: Option<f64>,

    /// Share of captions mentioning a second class [default: 0.15]
    #[arg(long)]
    pub distractors: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SynthCommand {
    #[command(flatten)]
    pub world: SynthArgs,

    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}
