use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_diagonal:e})")]
    Convergence { sweeps: usize, off_diagonal: f64 },

    /// Batch normalization with `epsilon == 0` met a (numerically) constant row.
    #[error("row {row} has variance {variance:e} and epsilon is zero")]
    DegenerateVariance { row: usize, variance: f64 },

    /// The centered Gram matrix of a whitening group is not full rank.
    #[error("group {group} is rank deficient: smallest/largest eigenvalue ratio {ratio:e}")]
    RankDeficient { group: usize, ratio: f64 },

    #[error("column {column} has zero norm")]
    ZeroNorm { column: usize },

    #[error("only {usable} dimension(s) have usable variance, need at least 2")]
    InsufficientVariance { usable: usize },

    #[error("cannot draw {requested} distinct samples from {available}")]
    Sampling { requested: usize, available: usize },

    /// Malformed external data; `offset` is the byte position of the fault.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },

    #[error("cache mismatch: {0}")]
    Cache(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    /// True for the failure mode that signals complete collapse of the
    /// projection space rather than a bug or bad input.
    pub fn is_collapse(&self) -> bool {
        matches!(self, Error::DegenerateVariance { .. })
    }
}
