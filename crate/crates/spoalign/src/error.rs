//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across loading, statistics, scoring,
/// training, and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: score out of range: {score} (must be an integer in 0..=10)")]
    ScoreOutOfRange {
        path: PathBuf,
        line: usize,
        score: i64,
    },

    #[error("duplicate rating: listener {listener_id} rated pair {pair_id} more than once")]
    DuplicateRating {
        pair_id: String,
        listener_id: String,
    },

    #[error("pair {pair_id} maps to more than one (text_id, audio_id) combination")]
    InconsistentPair { pair_id: String },

    #[error("strict triplets: text {text_id} has {got} distinct audios, expected 3")]
    TripletViolation { text_id: String, got: usize },

    #[error("embedding manifest {path}: {message}")]
    BadManifest { path: PathBuf, message: String },

    #[error("truncated embedding for id {id}: {path} holds {actual} bytes, expected {expected} (dim x 4)")]
    TruncatedEmbedding {
        id: String,
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in embedding {id} at component {index}")]
    NonFiniteEmbedding { id: String, index: usize },

    #[error("duplicate id in embedding manifest: {id}")]
    DuplicateEmbeddingId { id: String },

    #[error("embedding not found: {id}")]
    MissingEmbedding { id: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cosine undefined: {side} vector has near-zero norm")]
    ZeroNormVector { side: &'static str },

    #[error("degenerate listener {listener_id}: score standard deviation {sigma} below threshold")]
    DegenerateListener { listener_id: String, sigma: f64 },

    #[error("degenerate global std: training scores have no variance")]
    DegenerateGlobalStd,

    #[error("undefined correlation: {side} values have zero variance")]
    ZeroVariance { side: &'static str },

    #[error("kendall tau undefined: every pair is tied on one side")]
    DegenerateTau,

    #[error("missing prediction for pair {pair_id}")]
    MissingPrediction { pair_id: String },

    #[error("pair {pair_id} not present in dataset")]
    UnknownPair { pair_id: String },

    #[error("epoch {epoch} out of range (config has {epochs} epochs)")]
    EpochOutOfRange { epoch: usize, epochs: usize },

    #[error("non-finite gradient at parameter {index} (value {value}); aborting training")]
    NonFiniteGradient { index: usize, value: f64 },

    #[error("non-finite loss at epoch {epoch}; aborting training")]
    NonFiniteLoss { epoch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("ensemble spec has no members")]
    EmptyEnsemble,

    #[error("duplicate ensemble member: setting {setting}, warmup {warmup}, seed {seed}")]
    DuplicateEnsembleMember {
        setting: String,
        warmup: bool,
        seed: u64,
    },

    #[error("json error{}: {source}", path.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default())]
    Json {
        path: Option<PathBuf>,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: Some(path.into()),
            source,
        }
    }
}
