use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("family outside the hypothesis regime, violated [{}]: {detail}", violated.join(", "))]
    InvalidFamily { violated: Vec<String>, detail: String },

    #[error("inverse branch solver exhausted {bisections} bisections for target {target} at omega {omega}")]
    SolverBudgetExceeded { omega: f64, target: f64, bisections: usize },

    #[error("{what}: requested {requested} exceeds budget {limit}")]
    BudgetExceeded { what: &'static str, requested: u64, limit: u64 },

    #[error("schedule budget {budget} exceeded at block {block} (needs N = {required}); {feasible} blocks feasible")]
    ScheduleBudgetExceeded { feasible: usize, block: usize, required: u64, budget: u64 },

    #[error("no gap interval for delta0 = {delta0} and k = {k}")]
    EmptyGap { delta0: f64, k: u32 },

    #[error("orbit point {index} lies within {distance:e} of a partition boundary")]
    BoundaryAmbiguity { index: usize, distance: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
