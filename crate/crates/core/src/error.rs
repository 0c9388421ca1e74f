use crate::model::Violation;

/// Every failure the store can report. Each variant has a stable
/// machine-readable code (see [`Error::code`]) which the gateway maps onto
/// exactly one HTTP status.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid name: {0}")]
    InvalidName(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid partition: {}", fmt_violations(.0))]
    InvalidPartition(Vec<Violation>),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("gone: {0}")]
    Gone(String),
    #[error("digest mismatch for {0}")]
    DigestMismatch(String),
    #[error("insufficient replicas: need {needed}, have {available}")]
    InsufficientReplicas { needed: usize, available: usize },
    #[error("insufficient nodes: need {needed}, have {available}")]
    InsufficientNodes { needed: usize, available: usize },
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("unauthenticated: {0}")]
    Unauthenticated(String),
    #[error("versioning disabled for namespace; {0} already exists")]
    VersioningDisabled(String),
    #[error("too many partitions (limit {0})")]
    TooManyPartitions(usize),
    #[error("partition not found: {0}")]
    PartitionNotFound(String),
    #[error("malformed sidecar: {0}")]
    MalformedSidecar(String),
    #[error("remote cluster unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("parse error at {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown namespace: {0}")]
    UnknownNamespace(String),
    #[error("malformed dictionary at {path}: {message}")]
    MalformedDictionary { path: String, message: String },
    #[error("pipeline stage {stage} failed: {cause}")]
    PipelineStage { stage: String, cause: String },
    #[error("self loop on {0}")]
    SelfLoop(String),
    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("edge crosses namespaces: {0}")]
    CrossNamespace(String),
    #[error("graph is empty")]
    EmptyGraph,
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("quota exceeded for {0}")]
    QuotaExceeded(String),
    #[error("payload too large: {0} bytes")]
    PayloadTooLarge(u64),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidName(_) => "INVALID_NAME",
            Error::InvalidPath(_) => "INVALID_PATH",
            Error::InvalidPartition(_) => "INVALID_PARTITION",
            Error::NotFound(_) => "NOT_FOUND",
            Error::Gone(_) => "GONE",
            Error::DigestMismatch(_) => "DIGEST_MISMATCH",
            Error::InsufficientReplicas { .. } => "INSUFFICIENT_REPLICAS",
            Error::InsufficientNodes { .. } => "INSUFFICIENT_NODES",
            Error::Unauthorized(_) => "UNAUTHORIZED",
            Error::Unauthenticated(_) => "UNAUTHENTICATED",
            Error::VersioningDisabled(_) => "VERSIONING_DISABLED",
            Error::TooManyPartitions(_) => "TOO_MANY_PARTITIONS",
            Error::PartitionNotFound(_) => "PARTITION_NOT_FOUND",
            Error::MalformedSidecar(_) => "MALFORMED_SIDECAR",
            Error::RemoteUnavailable(_) => "REMOTE_UNAVAILABLE",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::UnknownNamespace(_) => "UNKNOWN_NAMESPACE",
            Error::MalformedDictionary { .. } => "MALFORMED_DICTIONARY",
            Error::PipelineStage { .. } => "PIPELINE_STAGE_ERROR",
            Error::SelfLoop(_) => "SELF_LOOP",
            Error::WeightOutOfRange(_) => "WEIGHT_OUT_OF_RANGE",
            Error::CrossNamespace(_) => "CROSS_NAMESPACE",
            Error::EmptyGraph => "EMPTY_GRAPH",
            Error::DuplicateId(_) => "DUPLICATE_ID",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::QuotaExceeded(_) => "QUOTA_EXCEEDED",
            Error::PayloadTooLarge(_) => "PAYLOAD_TOO_LARGE",
            Error::Scenario(_) => "SCENARIO_ERROR",
            Error::BadRequest(_) => "BAD_REQUEST",
            Error::Io(_) => "IO_ERROR",
        }
    }

    /// All codes, in declaration order. Used to prove the HTTP mapping is total.
    pub const ALL_CODES: &'static [&'static str] = &[
        "INVALID_NAME",
        "INVALID_PATH",
        "INVALID_PARTITION",
        "NOT_FOUND",
        "GONE",
        "DIGEST_MISMATCH",
        "INSUFFICIENT_REPLICAS",
        "INSUFFICIENT_NODES",
        "UNAUTHORIZED",
        "UNAUTHENTICATED",
        "VERSIONING_DISABLED",
        "TOO_MANY_PARTITIONS",
        "PARTITION_NOT_FOUND",
        "MALFORMED_SIDECAR",
        "REMOTE_UNAVAILABLE",
        "PARSE_ERROR",
        "UNKNOWN_NAMESPACE",
        "MALFORMED_DICTIONARY",
        "PIPELINE_STAGE_ERROR",
        "SELF_LOOP",
        "WEIGHT_OUT_OF_RANGE",
        "CROSS_NAMESPACE",
        "EMPTY_GRAPH",
        "DUPLICATE_ID",
        "INVALID_CONFIG",
        "QUOTA_EXCEEDED",
        "PAYLOAD_TOO_LARGE",
        "SCENARIO_ERROR",
        "BAD_REQUEST",
        "IO_ERROR",
    ];
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
