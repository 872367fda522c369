use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid turn: {0}")]
    InvalidTurn(String),
    #[error("invalid interval [{start}, {end}) ms")]
    InvalidInterval { start: i64, end: i64 },
    #[error("turn of speaker {speaker} ends at {end} ms, past recording end {total} ms")]
    TurnPastEnd { speaker: String, end: i64, total: i64 },
    #[error("recording id mismatch: expected {expected}, found {found}")]
    RecordingMismatch { expected: String, found: String },
    #[error("empty embedding set")]
    EmptyEmbeddings,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("recording has zero duration")]
    ZeroDuration,
    #[error("annotation has no speech")]
    NoSpeech,
    #[error("recording {0} has no domain")]
    UnmappedRecording(String),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("not enough data: {0}")]
    NotEnoughData(String),
    #[error("negative affinity {value} at ({row}, {col})")]
    NegativeAffinity { row: usize, col: usize, value: f64 },
    #[error("eigendecomposition failed")]
    Eigen,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("infeasible corpus profile: {0}")]
    Infeasible(String),
}
