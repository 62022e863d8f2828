use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("newick syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },

    #[error("duplicate leaf label `{0}`")]
    DuplicateLabel(String),

    #[error("unknown leaf label `{0}`")]
    UnknownLabel(String),

    #[error("tree needs at least {needed} leaves, got {got}")]
    TooFewLeaves { needed: usize, got: usize },

    #[error("operation requires a binary tree")]
    NotBinary,

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("label sets differ")]
    LabelMismatch,

    #[error("path endpoints must differ (`{0}`)")]
    SameEndpoints(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown edge id {0}")]
    UnknownEdge(usize),

    #[error("model families differ: {0} vs {1}")]
    FamilyMismatch(String, String),

    #[error("{states} patterns exceed the dense enumeration budget of {budget}; use sampling instead")]
    BudgetExceeded { states: f64, budget: u64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
