use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("node index {index} out of range 1..={count}")]
    NodeOutOfRange { index: usize, count: usize },
    #[error("graph is not weakly connected")]
    NotWeaklyConnected,
    #[error("node {0} has no incoming neighbors")]
    NoNeighbors(usize),
    #[error("node {neighbor} is not an in-neighbor of node {node}")]
    NotANeighbor { node: usize, neighbor: usize },
    #[error("empty list")]
    EmptyList,

    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is numerically singular (condition number {0:.3e})")]
    Singular(f64),

    #[error("constraint depends non-affinely on the decision variables: {0}")]
    NonAffine(String),
    #[error("no feasible point: {0}")]
    Infeasible(String),
    #[error("solver budget exhausted: {0}")]
    BudgetExhausted(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
