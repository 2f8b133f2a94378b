use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("extension degree {0} unsupported (supported range is 2..=16)")]
    UnsupportedDegree(u32),
    #[error("polynomial {poly:#x} is not primitive of degree {p}")]
    NotPrimitive { p: u32, poly: u32 },
    #[error("field element {value} out of range for GF({q})")]
    ElementOutOfRange { value: u32, q: u32 },
    #[error("division by zero in GF(2^p)")]
    DivisionByZero,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("block size {p} does not divide matrix dimensions {rows}x{cols}")]
    NotDivisible { p: usize, rows: usize, cols: usize },
    #[error("basis selection is not obtained from the extender basis by zeroing columns")]
    NotBelowExtender,
    #[error("symbol {symbol} cannot be resolved: generator rank {rank} < {p}")]
    Unresolvable { symbol: usize, rank: usize, p: usize },
    #[error("symbol {symbol}: extended bits are inconsistent with the generator")]
    Inconsistent { symbol: usize },
    #[error("selector inconsistency: {0}")]
    SelectorMismatch(String),
    #[error("weight {w} out of range 1..={max}")]
    WeightOutOfRange { w: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible degree targets: {0}")]
    InfeasibleDegrees(String),
    #[error("degenerate label set: {0}")]
    DegenerateLabels(String),
    #[error("girth target {target} not reachable at p = {p}: {reason}")]
    GirthInfeasible { target: usize, p: u32, reason: String },
    #[error("construction exhausted: {0}")]
    Exhausted(String),
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("threshold interval does not bracket the target: {0}")]
    NotBracketing(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
