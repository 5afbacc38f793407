use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::pals::IterationRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("empty result: {0}")]
    EmptyResult(String),
    #[error("solver diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        history: Vec<IterationRecord>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
