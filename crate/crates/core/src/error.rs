use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("invalid knowledge base: {0}")]
    KnowledgeBase(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vocabulary is empty after filtering ({documents} documents, min_doc_freq = {min_doc_freq})")]
    EmptyVocabulary { documents: usize, min_doc_freq: usize },

    #[error("corrupt vocabulary: token {token:?} has document frequency {df} (corpus size {num_docs})")]
    CorruptVocabulary { token: String, df: usize, num_docs: usize },

    #[error("stance {stance:?} of issue {issue:?} has no seed users")]
    NoSeeds { issue: String, stance: String },

    #[error("stance vector for {0:?} is empty")]
    EmptyStanceVector(String),

    #[error("unknown {kind} {name:?}")]
    Unknown { kind: &'static str, name: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid LDA configuration: {0}")]
    LdaConfig(String),

    #[error("every topic is junk at epsilon = {epsilon}")]
    AllTopicsJunk { epsilon: f64 },

    #[error("Laplacian solve failed on a component of {nodes} nodes (condition estimate {condition:e})")]
    Singular { nodes: usize, condition: f64 },

    #[error("statistics: {0}")]
    Stats(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` requires stage `{requires}` to be run first")]
    MissingStage { stage: String, requires: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingStage { .. } => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
