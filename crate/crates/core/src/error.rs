use std::path::PathBuf;

use crate::harness::ExecutionRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("relation {mr}: invalid constant k={k}: {reason}")]
    InvalidConstant { mr: String, k: i64, reason: &'static str },

    #[error("relation {mr}: arithmetic overflow transforming input {id}")]
    Overflow { mr: String, id: u64 },

    #[error("relation set is empty")]
    EmptyMrSet,

    #[error("duplicate relation id {0}")]
    DuplicateMrId(String),

    #[error("invalid range: lo={lo} > hi={hi}")]
    InvalidRange { lo: i64, hi: i64 },

    #[error("fuzz count must be at least 1")]
    ZeroCount,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("function {function:?} is not exposed by the system under test (input {id})")]
    UnknownFunction { function: String, id: u64 },

    #[error("arithmetic overflow in {function} on input {id}")]
    SutOverflow { function: String, id: u64 },

    #[error("failed to spawn system under test for {function} on input {id}: {source}")]
    SutSpawn {
        function: String,
        id: u64,
        #[source]
        source: std::io::Error,
    },

    #[error("system under test exited with {status} for {function} on input {id}: {stderr}")]
    SutExit { function: String, id: u64, status: String, stderr: String },

    #[error("unparseable output {output:?} from {function} on input {id}")]
    SutOutput { function: String, id: u64, output: String },

    #[error("campaign aborted after {} complete records: {source}", partial.len())]
    CampaignAborted { partial: Vec<ExecutionRecord>, source: Box<Error> },

    #[error("log is partial ({0}); re-run the campaign")]
    PartialLog(String),

    #[error("log is empty after cleaning")]
    EmptyAfterCleaning,

    #[error("unknown cell {0}")]
    UnknownCell(String),

    #[error("malformed decisions document: {0}")]
    MalformedDecisions(String),

    #[error("cell {cell}: {reason}")]
    InvalidDecision { cell: String, reason: String },

    #[error("campaign blocked by fault in cell {0}; repeat phase I once the fault is fixed")]
    Blocked(String),

    #[error("transaction database is empty")]
    EmptyDatabase,

    #[error("confidence undefined: antecedent has zero support")]
    UndefinedConfidence,

    #[error("lift undefined: consequent has zero support")]
    UndefinedLift,

    #[error("threshold {0} must lie in (0, 1]")]
    Threshold(String),

    #[error("rule condition {0} cannot be satisfied by any input")]
    Unsatisfiable(String),

    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), line, message: message.into() }
    }

    /// True for failures of the system under test itself, as opposed to
    /// configuration or file problems.
    pub fn is_sut_failure(&self) -> bool {
        match self {
            Error::SutSpawn { .. }
            | Error::SutExit { .. }
            | Error::SutOutput { .. }
            | Error::SutOverflow { .. }
            | Error::Overflow { .. }
            | Error::UnknownFunction { .. } => true,
            Error::CampaignAborted { source, .. } => source.is_sut_failure(),
            _ => false,
        }
    }
}
