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
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("input too small: {width}x{height}, need at least {min}x{min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("co-occurrence matrix has no valid pixel pairs")]
    DegenerateGlcm,
    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("embedding provider initialisation failed: {0}")]
    ProviderInit(String),
    #[error("inference failed: {0}")]
    Inference(String),
    #[error("no embedding for {0:?}")]
    EmbeddingMiss(Vec<String>),
    #[error("no cached {family} features for {paths:?}")]
    MissingFeatures { family: String, paths: Vec<String> },
    #[error("dimension mismatch{}: expected {expected}, got {actual}", context_suffix(.context))]
    DimMismatch {
        expected: usize,
        actual: usize,
        context: Option<String>,
    },
    #[error("parse error{}: {message}", line_suffix(.line))]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("duplicate key {key:?} on lines {first} and {second}")]
    DuplicateKey {
        key: String,
        first: usize,
        second: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("unknown feature family {0}")]
    UnknownFamily(String),
    #[error("fusion order violated: {0}")]
    FusionOrder(String),
    #[error("standardization statistics mismatch: {expected} vs {actual}")]
    StatsMismatch { expected: String, actual: String },

    #[error("training data contains a single class")]
    SingleClass,
    #[error("invalid feature value: {0}")]
    InvalidFeature(String),
    #[error("unsupported model format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("label and prediction lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("no observations")]
    Empty,

    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("requested dimension {requested} exceeds data dimension {available}")]
    Dim { requested: usize, available: usize },
    #[error("silhouette requires two clusters")]
    SingleCluster,
    #[error("rank correlation undefined for constant input")]
    ConstantInput,
    #[error("need at least {min} groups, got {got}")]
    GroupCount { min: usize, got: usize },
    #[error("value {value} at index {index} outside [0, 1]")]
    Range { index: usize, value: f64 },

    #[error("manifest schema error: {0}")]
    Schema(String),
    #[error("duplicate manifest path {0:?}")]
    Duplicate(String),
    #[error("row {row}: invalid label {label:?}")]
    Label { row: usize, label: String },
    #[error("stratum {0} has fewer than 2 members")]
    Stratum(String),
    #[error("need at least 2 generators, found {0}")]
    GeneratorCount(usize),
}

fn context_suffix(ctx: &Option<String>) -> String {
    ctx.as_ref().map(|c| format!(" ({c})")).unwrap_or_default()
}

fn line_suffix(line: &Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
