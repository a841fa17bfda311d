use vfc_core::ablation::AblationError;
use vfc_core::candidates::CandidateError;
use vfc_core::embedding::EmbeddingError;
use vfc_core::evaluation::EvalError;
use vfc_core::index::IndexError;
use vfc_core::ingestion::IngestError;
use vfc_core::scoring::ScoringError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Candidates(#[from] CandidateError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
    #[error(transparent)]
    Ablation(#[from] AblationError),
    #[error("{what} {id}: {source}")]
    Query { what: &'static str, id: String, source: ScoringError },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Invalid(_) => "invalid-input",
            CliError::Io(_) => "io",
            CliError::Embedding(_) => "embedding",
            CliError::Index(_) => "index",
            CliError::Ingest(_) => "ingest",
            CliError::Candidates(_) => "candidates",
            CliError::Scoring(_) | CliError::Query { .. } => "scoring",
            CliError::Evaluation(_) => "evaluation",
            CliError::Ablation(_) => "ablation",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.to_string(), "kind": self.kind() }).to_string()
    }
}
