use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: invalid value {value:?} in column `{column}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Zero is not interior to the convex hull of `ψ_i / ν_i`; `direction`
    /// separates the points from the origin.
    #[error("estimating equations infeasible at this parameter (separating direction {direction:?})")]
    Infeasible { direction: Vec<f64> },

    #[error("both estimation paths failed; score path: {score}; profile path: {profile}")]
    BothPathsFailed {
        score: Box<Error>,
        profile: Box<Error>,
    },

    #[error("pairwise inclusion probabilities are required; estimate them with estimate_joint_pi_mc")]
    MissingJointPi,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of an iterative solver, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::Singular(_)
                | Error::Infeasible { .. }
                | Error::BothPathsFailed { .. }
        )
    }
}
