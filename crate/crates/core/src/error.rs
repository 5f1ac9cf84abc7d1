use thiserror::Error;

use crate::logic::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("sort mismatch: {0}")]
    SortMismatch(String),

    #[error("duplicate declaration of `{0}`")]
    Duplicate(String),

    #[error("undeclared symbol `{0}`")]
    Undeclared(String),

    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("state space too large: {count} ground atoms exceed the cap of {cap}")]
    StateSpaceTooLarge { count: usize, cap: usize },

    #[error("conditioning on evidence with zero probability")]
    ZeroProbabilityEvidence,

    #[error("model is not block-factorizable: {0}")]
    NotFactorizable(String),

    #[error("mixed/unscaled models have no defined asymptotics: {0}")]
    NoAsymptotics(String),

    #[error("invalid model:\n{}", .0.join("\n"))]
    InvalidModel(Vec<String>),

    #[error("missing domain size for sort `{0}`")]
    MissingDomainSize(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample file line {line}: {message}")]
    SampleFormat { line: usize, message: String },
}
