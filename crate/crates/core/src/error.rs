use thiserror::Error;

use crate::tree::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("zero operator where a nonzero one is required")]
    ZeroOperator,

    #[error("local operator does not have unit trace (trace {trace})")]
    NotUnitTrace { trace: f64 },

    #[error("weight must be positive, got {0}")]
    NonPositiveWeight(f64),

    #[error("outcomes {first} and {second} are proportional")]
    DuplicateOutcome { first: usize, second: usize },

    #[error("closure violated: residual {residual:.3e} exceeds {tolerance:.1e}")]
    Closure { residual: f64, tolerance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("node {node} has out-degree {degree}; expected 0 or 2")]
    NotFullBinary { node: NodeId, degree: usize },

    #[error(
        "residual operator at node {node} is numerically singular (eigenvalue {eigenvalue:.3e})"
    )]
    SingularResidual { node: NodeId, eigenvalue: f64 },

    #[error("leaf {leaf} matches no outcome of the separable operation")]
    UnmatchedLeaf { leaf: NodeId },

    #[error("pruning invariant broken: {0}")]
    Structure(String),

    #[error("family too large for brute-force enumeration ({0} representatives)")]
    FamilyTooLarge(usize),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("sampling did not succeed within {0} attempts")]
    RetryBudget(usize),
}
