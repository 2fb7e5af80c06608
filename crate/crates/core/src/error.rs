use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A record failed validation while building a table.
    Ingestion { row: usize, field: String, reason: String },
    /// A record that must carry a class label does not, or a label is out of range.
    Labeling { row: usize, reason: String },
    UnknownGroup(String),
    /// No labeled records where at least one was required.
    EmptyLabels,
    Dimension { expected: usize, found: usize },
    InsufficientData { needed: usize, found: usize },
    /// More clusters requested than there are distinct points.
    InfeasibleK { k: usize, distinct: usize },
    Numeric(String),
    InvalidArgument(String),
    Consistency(String),
    /// Entropy of a group with no patches.
    EmptyGroup,
    Slice { n: usize, groups: usize },
    Config(String),
    /// Training loss became non-finite.
    Training { epoch: usize },
    Evaluation(String),
    /// Train and test groups overlap.
    Leakage { groups: Vec<String> },
    Degenerate(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Ingestion { row, field, reason } => {
                write!(f, "ingestion error at row {row}, field `{field}`: {reason}")
            }
            Error::Labeling { row, reason } => write!(f, "labeling error at row {row}: {reason}"),
            Error::UnknownGroup(g) => write!(f, "unknown group `{g}`"),
            Error::EmptyLabels => f.write_str("table has no labeled records"),
            Error::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InsufficientData { needed, found } => {
                write!(f, "insufficient data: need at least {needed} records, found {found}")
            }
            Error::InfeasibleK { k, distinct } => {
                write!(f, "cannot seed {k} clusters from {distinct} distinct points")
            }
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::Consistency(m) => write!(f, "consistency error: {m}"),
            Error::EmptyGroup => f.write_str("cluster entropy of an empty group is undefined"),
            Error::Slice { n, groups } => {
                write!(f, "slice size {n} exceeds group count {groups}")
            }
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Training { epoch } => write!(f, "training diverged (non-finite loss) in epoch {epoch}"),
            Error::Evaluation(m) => write!(f, "evaluation error: {m}"),
            Error::Leakage { groups } => {
                write!(f, "train/test leakage: groups {groups:?} appear in both")
            }
            Error::Degenerate(m) => write!(f, "degenerate input: {m}"),
        }
    }
}

impl core::error::Error for Error {}
