use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate example id `{0}`")]
    DuplicateId(String),

    #[error("example `{id}` has no references")]
    EmptyReferences { id: String },

    #[error("example `{id}`: {what} is empty")]
    EmptySequence { id: String, what: String },

    #[error("example `{id}` has {have} references, need at least {need}")]
    InsufficientReferences { id: String, have: usize, need: usize },

    #[error("a training-split reference corpus is required to count OOVs for a {split} corpus")]
    MissingTrainReference { split: String },

    #[error("length mismatch: {left} hypotheses vs {right} reference sets")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("pairwise BLEU needs at least two sentences, got {0}")]
    FewerThanTwo(usize),

    #[error("ragged hypothesis lists: example {index} has {found} hypotheses, expected {expected}")]
    RaggedK {
        index: usize,
        found: usize,
        expected: usize,
    },

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("target sequence must end with EOS")]
    MissingEos,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("shape mismatch in block `{block}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        block: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("requested {requested} hypotheses but only {available} available")]
    KTooLarge { requested: usize, available: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training log is empty")]
    EmptyLog,

    #[error("transport error: {0}")]
    Transport(String),

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("unparseable response after {attempts} attempts")]
    UnparseableResponse { attempts: usize },

    #[error("only {have} distinct candidates after retries, need {need}")]
    InsufficientCandidates { have: usize, need: usize },

    #[error("example `{id}`: {source}")]
    Example {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(problem: impl Into<String>) -> Self {
        Error::InvalidConfig(vec![problem.into()])
    }

    pub fn in_example(self, id: impl Into<String>) -> Self {
        Error::Example {
            id: id.into(),
            source: Box::new(self),
        }
    }

    /// Stable machine-readable tag, used in CLI error records and by the C API.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Json(_) => "parse",
            Error::DuplicateId(_) => "duplicate_id",
            Error::EmptyReferences { .. } => "empty_references",
            Error::EmptySequence { .. } => "empty_sequence",
            Error::InsufficientReferences { .. } => "insufficient_references",
            Error::MissingTrainReference { .. } => "missing_train_reference",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::EmptyInput(_) => "empty_input",
            Error::FewerThanTwo(_) => "fewer_than_two",
            Error::RaggedK { .. } => "ragged_k",
            Error::InvalidConfig(_) => "invalid_config",
            Error::TokenOutOfRange { .. } => "token_out_of_range",
            Error::MissingEos => "missing_eos",
            Error::Checkpoint(_) => "checkpoint",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::KTooLarge { .. } => "k_too_large",
            Error::NonFinite(_) => "non_finite",
            Error::EmptyLog => "empty_log",
            Error::Transport(_) => "transport",
            Error::MalformedResponse(_) => "malformed_response",
            Error::Timeout(_) => "timeout",
            Error::UnparseableResponse { .. } => "unparseable_response",
            Error::InsufficientCandidates { .. } => "insufficient_candidates",
            Error::Example { source, .. } => source.kind(),
        }
    }

    /// Offending fields for configuration errors, empty otherwise.
    pub fn fields(&self) -> &[String] {
        match self {
            Error::InvalidConfig(fields) => fields,
            _ => &[],
        }
    }
}
