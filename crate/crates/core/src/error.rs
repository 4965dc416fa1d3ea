use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("matrix is asymmetric at ({i}, {j})")]
    AsymmetricMatrix { i: usize, j: usize },
    #[error("diagonal entry ({i}, {i}) is nonzero")]
    NonzeroDiagonal { i: usize },
    #[error("entry ({i}, {j}) = {value} is not 0 or 1")]
    NonBinaryEntry { i: usize, j: usize, value: u32 },
    #[error("stations {i} and {j} are not partners")]
    NotPartners { i: usize, j: usize },
    #[error("station index {0} out of range")]
    StationOutOfRange(usize),
    #[error("invalid probability {0}")]
    InvalidProbability(f64),
    #[error("stationary solver did not reach residual tolerance (residual {residual:e})")]
    SolverFailure { residual: f64 },
    #[error("singular linear system in block ({m}, {n})")]
    SingularSystem { m: usize, n: usize },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("fixed-point function does not change sign on the bracket")]
    NoSignChange,
    #[error("attempt probability {0} is degenerate")]
    DegenerateEta(f64),
    #[error("window formula radicand is negative ({0})")]
    NonPositiveDiscriminant(f64),
    #[error("pair-count quadratic has no positive root")]
    NoPositiveRoot,
    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),
    #[error("greedy frontier is empty")]
    EmptyFrontier,
    #[error("connectivity has {edges} edges, exhaustive search is limited to {limit}")]
    TooLarge { edges: usize, limit: usize },
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
