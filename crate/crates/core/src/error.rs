//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two dimensions that were required to agree did not.
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// An index was outside the valid range for its side.
    #[error("{what} id {id} out of range (must be < {bound})")]
    IdOutOfRange {
        what: &'static str,
        id: usize,
        bound: usize,
    },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Ratings-file parse failure; the message carries the 1-based line number.
    #[error("{reason} at line {line}")]
    Parse { line: usize, reason: String },

    /// Every user's positives cover the whole item set, so no negative exists.
    #[error("no valid triplets: every anchor's positives cover all items")]
    NoValidTriplets,

    /// Training produced a non-finite loss or gradient on this triplet.
    #[error("non-finite loss or gradient at triplet (user {user}, pos {pos}, neg {neg})")]
    NonFiniteAtTriplet { user: usize, pos: usize, neg: usize },

    /// A configuration field failed validation; names the offending key.
    #[error("invalid config: {key} {reason}")]
    InvalidConfig { key: &'static str, reason: String },

    /// The byte stream does not start with the checkpoint magic.
    #[error("not a checkpoint: bad magic header")]
    CheckpointNotRecognized,

    /// The magic matched but the version suffix is unknown.
    #[error("unsupported checkpoint version {found:?}")]
    CheckpointVersion { found: String },

    /// The stream ended before the declared payload was complete.
    #[error("truncated checkpoint")]
    CheckpointTruncated,

    /// Declared shapes are internally inconsistent or corrupt.
    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    /// A checkpoint's tower shapes do not fit the dataset it is used with.
    #[error("checkpoint incompatible with dataset: {0}")]
    CheckpointDatasetMismatch(String),

    /// Evaluation was asked for but no user has test positives.
    #[error("no evaluable users: every user has an empty test set")]
    NoEvaluableUsers,

    /// A user external id not present in the dataset.
    #[error("unknown user id {0}")]
    UnknownUser(u32),

    /// A split manifest references an entity absent from the ratings file.
    #[error("manifest incompatible with dataset: {0}")]
    ManifestMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
