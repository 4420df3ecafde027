//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// Operand shapes do not conform to an operation's contract.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A model input does not match the branch it is routed to.
    #[error("{branch} branch rejected input: {detail}")]
    BranchShape { branch: &'static str, detail: String },

    /// Invalid configuration value (layer schedule, window sizes, counts).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A connectivity graph violates its structural contract.
    #[error("invalid graph: {0}")]
    Graph(String),

    /// API misuse, e.g. changing the ReLU backward rule mid-backward.
    #[error("usage error: {0}")]
    Usage(String),

    /// Non-finite value detected at a layer boundary.
    #[error("non-finite value in {op} output")]
    NonFinite { op: &'static str },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad tensor file {path}: {detail}")]
    BadTensorFile { path: PathBuf, detail: String },

    /// A cohort payload file referenced by the manifest is missing.
    #[error("subject {subject}: missing file {path}")]
    MissingFile { subject: String, path: PathBuf },

    /// A loaded payload has the wrong dimensions.
    #[error("subject {subject}: {what} has shape {got:?}, expected {expected:?}")]
    LoadShape {
        subject: String,
        what: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },

    /// A loaded matrix is not symmetric within tolerance.
    #[error("subject {subject}: {what} matrix asymmetric (max deviation {deviation:.3e})")]
    Asymmetric {
        subject: String,
        what: String,
        deviation: f64,
    },

    /// A loaded value lies outside its contractual range.
    #[error("subject {subject}: {what} value {value} outside {range}")]
    ValueRange {
        subject: String,
        what: String,
        value: f64,
        range: &'static str,
    },

    #[error("bad manifest {path}: {detail}")]
    BadManifest { path: PathBuf, detail: String },

    /// Training loss became non-finite.
    #[error("fold {fold} diverged at epoch {epoch} (loss {loss})")]
    Diverged { fold: usize, epoch: usize, loss: f64 },

    #[error("empty sample passed to {0}")]
    EmptySample(&'static str),

    /// Pipeline stage invoked before its upstream stage produced outputs.
    #[error("missing upstream artifacts for `{needed}` (run the `{stage}` stage first): {detail}")]
    MissingStage {
        needed: &'static str,
        stage: &'static str,
        detail: String,
    },

    /// Output directory exists and is non-empty; pass --force to overwrite.
    #[error("output directory {0} exists and is not empty (use --force to overwrite)")]
    OutputExists(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
