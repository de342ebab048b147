use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("line {line}: column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("line {line}: duplicate entry for run {run} at env_step {env_step}")]
    Duplicate {
        line: usize,
        run: String,
        env_step: u64,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("curve {0} has no usable points")]
    UnusableCurve(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("optimization failed after {iterations} iterations: {message}")]
    Optimization { iterations: usize, message: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("manifest: {0}")]
    Manifest(String),
}

impl Error {
    /// True for failures of the numerics (fits, solvers), as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Estimation(_)
                | Error::Optimization { .. }
                | Error::Infeasible(_)
                | Error::RankDeficient(_)
                | Error::Degenerate(_)
        )
    }
}
