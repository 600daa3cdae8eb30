use core::fmt;

/// Failure modes of the filtering kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands disagree in dimension.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A matrix that must be square is not.
    NotSquare { rows: usize, cols: usize },
    /// NaN or infinity where a finite value is required.
    NonFinite(&'static str),
    /// A scalar parameter is outside its admissible range.
    InvalidParameter(&'static str),
    /// Estimated inter-node distance is too small to linearize the range model.
    DegenerateGeometry { distance: f64 },
    /// A numerical step broke down (singular matrix, non-positive innovation variance).
    Numerical(&'static str),
    /// The ω objective was non-finite over the entire search interval.
    Optimization,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::NotSquare { rows, cols } => write!(f, "matrix is not square ({rows}x{cols})"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::DegenerateGeometry { distance } => {
                write!(f, "degenerate range geometry (estimated distance {distance:e} m)")
            }
            Error::Numerical(what) => write!(f, "numerical failure: {what}"),
            Error::Optimization => write!(f, "omega objective is non-finite on the whole interval"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
