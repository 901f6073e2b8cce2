use thiserror::Error;

use crate::solvers::RunTrace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("MDP has no states")]
    NoStates,
    #[error("discount factor {0} outside (0, 1)")]
    GammaOutOfRange(f64),
    #[error("duplicate action id {0:?}")]
    DuplicateAction(String),
    #[error("action {action:?} refers to state {state} of {n_states}")]
    StateOutOfRange {
        action: String,
        state: usize,
        n_states: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("action {action:?} has negative probability {value} at {index}")]
    NegativeProbability {
        action: String,
        index: usize,
        value: f64,
    },
    #[error("probabilities of action {action:?} sum to {sum}")]
    RowSum { action: String, sum: f64 },
    #[error("state {0} has no actions")]
    EmptyState(usize),
    #[error("action {0:?} has a non-finite entry")]
    NonFinite(String),
    #[error("unknown action index {0}")]
    UnknownAction(usize),
    #[error("action {action} does not belong to state {state}")]
    ForeignAction { action: usize, state: usize },
    #[error("state {0} has no active action")]
    NoActiveAction(usize),
    #[error("state index {0} out of range")]
    UnknownState(usize),
    #[error("singular policy evaluation system")]
    SingularSystem,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error(transparent)]
    Model(#[from] MdpError),
    #[error("new discount factor {0} outside (0, 1)")]
    GammaOutOfRange(f64),
    #[error("unsafe transform: action {action} gets coefficient {coeff} at state {state}")]
    Unsafe {
        action: usize,
        state: usize,
        coeff: f64,
    },
    #[error(transparent)]
    Solver(#[from] Box<SolverError>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] MdpError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("iteration cap {cap} reached without meeting the stop criterion")]
    IterationCap { cap: usize, trace: Box<RunTrace> },
    #[error("policy iteration did not stabilise within {0} rounds")]
    PolicyCycle(usize),
    #[error("policy iteration and enumeration disagree by {gap}")]
    OracleMismatch { gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] MdpError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("trace too short: need {needed} iterations, have {have}")]
    TraceTooShort { needed: usize, have: usize },
    #[error("span underflow in trace")]
    SpanUnderflow,
    #[error("learning rate {0} outside (0, 1)")]
    AlphaOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TwoStateError {
    #[error(transparent)]
    Model(#[from] MdpError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("expected a 2-state MDP, got {0} states")]
    NotTwoState(usize),
    #[error("need at least 3 actions, got {0}")]
    TooFewActions(usize),
    #[error("action set does not cover both states")]
    Uncovered,
    #[error("two-state bound violated: {reason}")]
    BoundViolated { reason: String, instance: Box<crate::mdp::Mdp> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error(transparent)]
    Model(#[from] MdpError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("planted policy not optimal after {0} attempts")]
    PlantingFailed(usize),
}
