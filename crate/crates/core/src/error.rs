use thiserror::Error;

use crate::game_model::Method;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown vertex id {0}")]
    UnknownVertex(usize),
    #[error("path has no edge {src} -> {dst}")]
    MissingEdge { src: usize, dst: usize },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("path must have at least two vertices")]
    PathTooShort,
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("generator cannot make goal {0} reachable without the repair pass")]
    Infeasible(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("unknown vertex id {0}")]
    UnknownVertex(usize),
    #[error("unknown attacker type {0}")]
    UnknownType(usize),
    #[error("attacker priors sum to {0}, expected 1")]
    PriorSum(f64),
    #[error("game has no attack paths")]
    NoPaths,
    #[error("path {index} is invalid: {source}")]
    InvalidPath { index: usize, source: GraphError },
    #[error("coverage uses {used} of budget {budget}")]
    BudgetViolation { used: f64, budget: f64 },
    #[error("coverage vector has {got} entries, graph has {expected} vertices")]
    CoverageLength { got: usize, expected: usize },
    #[error("coverage entry {vertex} = {value} is outside [0,1]")]
    CoverageRange { vertex: usize, value: f64 },
    #[error("unknown vulnerability class label {0:?}")]
    UnknownClass(String),
    #[error("invalid game parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("grid has {points:.3e} points, above the {limit:.0e} cap")]
    GridTooLarge { points: f64, limit: f64 },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("solution violates attacker incentives for type {ty} by {gap:.3e}")]
    IncentiveViolation { ty: usize, gap: f64 },
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("negative analysis budget {0}")]
    NegativeTau(f64),
    #[error("method {0:?} has no observation model")]
    UnknownMethod(Method),
    #[error("method {method:?} has no rates for class {class}")]
    UnknownClass { method: Method, class: usize },
    #[error("invalid observation model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("grid has {points:.3e} points, above the {limit:.0e} cap")]
    GridTooLarge { points: f64, limit: f64 },
    #[error("reward {0} is outside [0,1]")]
    RewardRange(f64),
    #[error("too few positive regret points to fit ({0})")]
    TooFewPoints(usize),
    #[error("invalid learner input: {0}")]
    Invalid(String),
}

/// Crate-level error, grouped by the exit code the CLI reports for it.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn with_context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// 2 for bad input or infeasible configurations, 3 for internal invariant
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) | Error::Solver(SolverError::IncentiveViolation { .. }) => 3,
            Error::Context { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
