//! Geometry of discounted MDPs: action vectors, value-preserving
//! transforms, value and policy iteration, and convergence certificates.

pub mod analysis;
pub mod bellman;
pub mod error;
pub mod gen;
pub mod mdp;
pub mod solvers;
pub mod transforms;
pub mod twostate;

pub use bellman::{bellman_optimal, bellman_policy, evaluate_policy};
pub use error::{AnalysisError, GenError, MdpError, SolverError, TransformError, TwoStateError};
pub use mdp::{span, Action, ActionId, ActionSet, ActionVector, Mdp, Policy, StateId, ValueVector, ADV_TOL, ROW_SUM_TOL};
pub use solvers::{policy_iteration, solve_exact, value_iteration, ExactSolution, RunTrace, Stop, StopReason, ViConfig};
