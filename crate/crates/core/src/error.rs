use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated payload: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("sample {sample_id:?}: ref count mismatch (clip {clip}, roberta {roberta})")]
    RefCountMismatch {
        sample_id: String,
        clip: usize,
        roberta: usize,
    },

    #[error("sample {sample_id:?}: non-finite value in {field}")]
    NonFinite {
        sample_id: String,
        field: &'static str,
    },

    #[error("sample {sample_id:?}: score {score} out of range [0, 1]")]
    ScoreOutOfRange { sample_id: String, score: f64 },

    #[error("sample {sample_id:?}: score presence disagrees with header flag")]
    ScoreFlagMismatch { sample_id: String },

    #[error("sample {0:?} has no score")]
    MissingScore(String),

    #[error("sample {0:?} has no references")]
    NoReferences(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid head config: {0}")]
    InvalidHeadConfig(String),

    #[error("invalid train config: {0}")]
    InvalidTrainConfig(String),

    #[error("non-finite {0}")]
    NonFiniteValue(&'static str),

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(&'static str),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("no pairs")]
    NoPairs,

    #[error("pair {pair_id:?}: reference pool of {pool} is smaller than draw count {draws}")]
    PoolTooSmall {
        pair_id: String,
        pool: usize,
        draws: usize,
    },

    #[error("pair {pair_id:?}: {reason}")]
    InvalidPair { pair_id: String, reason: String },

    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(i64),

    #[error("id {0:?} assigned to more than one split")]
    SplitOverlap(String),

    #[error("invalid split request: {0}")]
    InvalidSplit(String),

    #[error("sample {0:?} has no surviving judgments")]
    NoSurvivingJudgments(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("unknown sample id {0:?}")]
    UnknownSample(String),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
