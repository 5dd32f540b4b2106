use alloc::string::String;
use core::fmt;

/// Failure modes shared by the numerical routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    Precondition(String),
    /// An index or parameter fell outside the admissible range.
    OutOfRange(String),
    /// A wavelet index with `c = 0` or a malformed index.
    InvalidIndex(String),
    /// The requested grid would exceed the memory budget.
    Resource { unknowns: u64, budget: u64 },
    /// A free wave packet would leave the periodic box before time `t`.
    BoxExit { needed_half_length: f64, half_length: f64 },
    /// Factorization or iteration failure inside an eigensolver.
    Solver(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            Error::OutOfRange(msg) => write!(f, "out of range: {msg}"),
            Error::InvalidIndex(msg) => write!(f, "invalid index: {msg}"),
            Error::Resource { unknowns, budget } => write!(
                f,
                "grid needs N^d = {unknowns} unknowns, budget is {budget}"
            ),
            Error::BoxExit {
                needed_half_length,
                half_length,
            } => write!(
                f,
                "wave packet leaves the box: need L >= {needed_half_length:.3}, have L = {half_length:.3}"
            ),
            Error::Solver(msg) => write!(f, "solver failure: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! precondition {
    ($($arg:tt)*) => {
        $crate::error::Error::Precondition(alloc::format!($($arg)*))
    };
}
pub(crate) use precondition;
