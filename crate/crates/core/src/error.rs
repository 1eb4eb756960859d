use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A piecewise-linear table was queried outside `[knots[0], knots[last]]`.
    #[error("table query at x = {x} outside knot range [{lo}, {hi}] (extrapolation is forbidden)")]
    Extrapolation { x: f64, lo: f64, hi: f64 },

    #[error("coefficient is path-dependent; no Markovian growth bounds exist")]
    NotMarkovian,

    #[error("diffusion coefficient evaluated to {value} < 0 at x = {x}")]
    NegativeDiffusion { x: f64, value: f64 },

    #[error("invalid coefficient spec: {0}")]
    InvalidSpec(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid probability vector: {0}")]
    InvalidMeasure(String),

    /// The scheme produced a non-finite value or exceeded the divergence threshold.
    #[error("numerical divergence at stage {stage}: value {value}")]
    Divergence { stage: usize, value: f64 },

    #[error("value {y} left the tabulated Zvonkin range [{lo}, {hi}]; enlarge the table")]
    TransformRange { y: f64, lo: f64, hi: f64 },

    #[error("stage count mismatch: {0} vs {1}")]
    StageMismatch(usize, usize),

    #[error("marginal sums differ: {0} vs {1}")]
    Infeasible(f64, f64),

    #[error("instance too large: {0} paths (limit {1})")]
    TooLarge(usize, usize),

    #[error("lp solver failure: {0}")]
    Solver(String),

    #[error("{failed} of {total} replicates diverged (limit 0.1%): {first}")]
    TooManyDivergences {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    /// True for errors caused by numerically diverging paths.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::TooManyDivergences { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
