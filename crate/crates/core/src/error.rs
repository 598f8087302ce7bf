use thiserror::Error;

/// Errors raised by the tensor arithmetic, discretization and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("dense size cap exceeded: {size} entries requested, cap is {cap}")]
    SizeCap { size: u128, cap: u128 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("dimension trees or mode sizes differ")]
    TreeMismatch,

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("diagonal supports of parameters {first} and {second} overlap on level {level}")]
    OverlappingSupports {
        level: usize,
        first: usize,
        second: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("weights file line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("exponential-sum interval [{have_lo}, {have_hi}] does not cover the spectrum [{need_lo}, {need_hi}]")]
    IntervalNotCovered {
        have_lo: f64,
        have_hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error(
        "parameter {nu} has {count} distinct diagonal values; the exact inverse diagonal needs one \
         (use the modified variant)"
    )]
    MultipleDiagonalValues { nu: usize, count: usize },

    #[error("level {0} has no transfer operators")]
    NoTransfer(usize),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("power iteration collapsed to zero; the operator appears to vanish")]
    ZeroOperator,

    #[error("spectrum lower bound {0} is not positive")]
    NonPositiveSpectrum(f64),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
