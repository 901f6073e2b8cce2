//! Generalized value iteration, Howard policy iteration and the exact oracle.

mod exact;
mod filter;
mod pi;
mod trace;
mod vi;

pub use exact::{brute_force, solve_exact, ExactSolution, BRUTE_FORCE_MAX_ACTIONS, BRUTE_FORCE_MAX_STATES};
pub use filter::{filter_appendix, filter_threshold};
pub use pi::{improve_policy, policy_iteration};
pub use trace::{IterRecord, RunTrace, StopReason};
pub use vi::{iteration_cap, value_iteration, Filter, InitialValues, Schedule, Stop, ViConfig};
