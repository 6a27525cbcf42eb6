use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("{containers} containers exceed the capacity {capacity} of a {tiers}x{stacks} bay")]
    CapacityExceeded {
        containers: usize,
        capacity: usize,
        tiers: usize,
        stacks: usize,
    },

    #[error("batch mismatch: {0}")]
    BatchMismatch(String),

    #[error("bad order distribution: {0}")]
    BadDistribution(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("node is not a decision node")]
    NotADecisionNode,

    #[error("node is not a chance node")]
    NotAChanceNode,

    #[error("no feasible destination for a blocking container on stack {stack}")]
    NoFeasibleDestination { stack: usize },

    #[error("bad permutation: {0}")]
    BadPermutation(String),

    #[error("bad choice: {0}")]
    BadChoice(String),

    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),

    #[error("bad candidate: {0}")]
    BadCandidate(String),

    #[error("retrieval order is not fully revealed")]
    NotFullyRevealed,

    #[error("time limit exceeded")]
    Timeout,

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("line {line}, column {column}: expected {expected}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
    },

    #[error("semantic error: {0}")]
    Semantic(String),

    #[error("unknown instance format `{0}`")]
    UnknownFormat(String),

    #[error("cannot map external instance: {0}")]
    Mapping(String),

    #[error("infeasible recipe: {0}")]
    InfeasibleRecipe(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
