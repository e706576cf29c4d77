use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("t = {t} lies outside the domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("functions are expressed in different bases")]
    BasisMismatch,

    #[error("basis is not orthonormal: {0}")]
    InvalidBasis(String),

    #[error("underdetermined fit: {t} observations for {l} basis functions")]
    Underdetermined { t: usize, l: usize },

    #[error("ill-conditioned design: {t} observations, {l} basis functions, cond(B'B) = {cond:e}")]
    Conditioning { t: usize, l: usize, cond: f64 },

    #[error("curve (sample {sample}, node {node}): {source}")]
    AtCurve {
        sample: usize,
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate spectrum: Lipschitz constant {0:e} is numerically zero")]
    DegenerateSpectrum(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("true edge set is empty, TPR is undefined")]
    UndefinedTpr,
}

impl Error {
    pub(crate) fn at_curve(self, sample: usize, node: usize) -> Self {
        Error::AtCurve {
            sample,
            node,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
