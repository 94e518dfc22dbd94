//! Error type shared by the whole crate.

use thiserror::Error;

/// Everything that can go wrong when constructing or querying the models.
#[derive(Error, Debug)]
pub enum Error {
    #[error("duplicate item {0} in top-k list")]
    DuplicateItem(u32),
    #[error("item {id} out of range for universe of size {u}")]
    ItemOutOfRange { id: u32, u: u32 },
    #[error("top-k list must not be empty")]
    EmptyList,
    #[error("k = {k} exceeds universe size {u}")]
    KExceedsUniverse { k: usize, u: u32 },
    #[error("operands live over different universes")]
    UniverseMismatch,
    #[error("instance has {count} lists, above the enumeration cap {cap}")]
    InstanceTooLarge { count: u128, cap: u64 },
    #[error("profile is infeasible for this universe (not enough filler items)")]
    InfeasibleProfile,
    #[error("profile space has {count} feasible profiles, above the cap {cap}")]
    ProfileSpaceTooLarge { count: u128, cap: u64 },
    #[error("requested {count} fillers but only {available} non-center items exist")]
    NotEnoughFillers { count: usize, available: usize },
    #[error("no score defined for item {0}")]
    MissingScore(u32),
    #[error("degenerate choice log: {0}")]
    DegenerateLog(String),
    #[error("optimizer failed to converge: {0}")]
    NonConvergence(String),
    #[error("observed choice {0} is outside the offered assortment")]
    ChoiceOutsideAssortment(u32),
    #[error("choice oracle failed: {0}")]
    OracleFailure(String),
    #[error("cannot form a size-r assortment: unknown and confirmed pools exhausted")]
    PaddingExhausted,
    #[error("tournament failed: {0}")]
    TournamentFailure(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("malformed line {line}: {msg}")]
    MalformedLine { line: usize, msg: String },
    #[error("inconsistent k at line {line}: expected {expected}, got {got}")]
    InconsistentK {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("too few records: have {have}, need at least {need}")]
    TooFewRecords { have: usize, need: usize },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("unsupported model file version: {0}")]
    VersionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
