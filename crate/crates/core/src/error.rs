use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("index {index} out of range (< {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("allocation violates capacity of UPF {upf}: load {load} >= {capacity}")]
    Infeasible { upf: usize, load: f64, capacity: f64 },
    #[error("allocation shape {rows}x{cols} does not match config {k}x{m}")]
    Shape {
        rows: usize,
        cols: usize,
        k: usize,
        m: usize,
    },
    #[error("action {action} is not feasible in this state")]
    InfeasibleAction { action: usize },
    #[error("instance too large: {states} states exceed the cap of {cap}")]
    InstanceTooLarge { states: u128, cap: u128 },
    #[error("outcome does not follow from the learner's current post-decision state")]
    OutcomeMismatch,
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("config hash mismatch: file has {found}, expected {expected}")]
    HashMismatch { found: String, expected: String },
    #[error("malformed CSV {path}: {reason}")]
    Csv { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
