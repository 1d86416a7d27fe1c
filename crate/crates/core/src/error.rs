use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed address `{0}`")]
    MalformedAddress(String),

    #[error("packet {src} -> {dst} does not involve device {device}")]
    ForeignPacket { src: String, dst: String, device: String },

    #[error("timestamp {ts} precedes last {direction} timestamp {last}")]
    NonMonotonicTimestamp {
        ts: f64,
        last: f64,
        direction: &'static str,
    },

    #[error("cluster tree holds no flows")]
    EmptyTree,

    #[error("no {0} packets recorded")]
    NoPacketsInDirection(&'static str),

    #[error("dunn index needs at least two clusters, got {0}")]
    NeedTwoClusters(usize),

    #[error("every cluster has zero diameter")]
    DegenerateDiameter,

    #[error("k = {k} is outside 1..={n}")]
    BadK { k: usize, n: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid clustering: {0}")]
    InvalidClustering(String),

    #[error("flow has no packets")]
    EmptyFlow,

    #[error("flow timestamps are not ordered at packet {0}")]
    UnorderedTimestamps(usize),

    #[error("no training flows")]
    EmptyTrainingSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad architecture: {0}")]
    BadArchitecture(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("no training data")]
    EmptyData,

    #[error("training diverged at epoch {epoch}: {reason}")]
    DivergedLoss { epoch: usize, reason: String },

    #[error("finite-difference step must lie in (0, 1e-2], got {0}")]
    InvalidEpsilon(f64),

    #[error("activity {0} has no trainable flows")]
    EmptyActivity(String),

    #[error("cannot calibrate a threshold from zero errors")]
    EmptyErrors,

    #[error("bad simulation spec: {0}")]
    BadSpec(String),

    #[error("invalid packet record at line {line}: {reason}")]
    InvalidRecord { line: usize, reason: String },

    #[error("schema error at `{path}`: {reason}")]
    Schema { path: String, reason: String },

    #[error("{0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
