use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid guild tree: {0}")]
    InvalidTree(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("count overflows for {0} species")]
    Overflow(usize),
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: String, iteration: usize },
    #[error("{0}")]
    Insufficient(String),
    #[error("oracle refused: {0}")]
    OracleRefused(String),
    #[error("draw sink failed: {0}")]
    Sink(String),
}
