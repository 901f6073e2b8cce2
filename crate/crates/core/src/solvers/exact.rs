use serde::{Deserialize, Serialize};

use crate::bellman::evaluate_policy;
use crate::error::SolverError;
use crate::mdp::{Mdp, Policy, ValueVector, ADV_TOL};

use super::pi::policy_iteration;

/// Instances at most this large are cross-checked by enumeration.
pub const BRUTE_FORCE_MAX_STATES: usize = 3;
pub const BRUTE_FORCE_MAX_ACTIONS: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub policy: Policy,
    pub values: ValueVector,
    /// `-max_{a not in pi*} adv(a, V*)`; infinite when every state has a
    /// single action.
    pub delta: f64,
    pub unique: bool,
    pub cross_checked: bool,
}

/// Optimal policy by Howard PI from the max-reward policy, cross-checked by
/// enumeration on small instances.
pub fn solve_exact(mdp: &Mdp) -> Result<ExactSolution, SolverError> {
    let (policy, _) = policy_iteration(mdp, &mdp.greedy_reward_policy())?;
    let values = policy.values.clone().expect("policy iteration fills values");
    let small = mdp.n_states() <= BRUTE_FORCE_MAX_STATES && mdp.n_actions() <= BRUTE_FORCE_MAX_ACTIONS;
    if small {
        let (_, bf) = brute_force(mdp)?;
        let gap = bf.max_abs_diff(&values);
        if gap > 1e-8 {
            return Err(SolverError::OracleMismatch { gap });
        }
    }
    let delta = optimality_gap(mdp, &policy, &values);
    Ok(ExactSolution {
        policy,
        values,
        delta,
        unique: delta > ADV_TOL,
        cross_checked: small,
    })
}

/// `-max_{a not in pi} adv(a, V)`.
pub(crate) fn optimality_gap(mdp: &Mdp, pi: &Policy, v: &[f64]) -> f64 {
    -mdp.action_ids()
        .filter(|&a| !pi.contains(a))
        .map(|a| mdp.advantage_unchecked(a, v))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Evaluates every deterministic policy and returns the one with the largest
/// total value (an optimal policy dominates componentwise).
pub fn brute_force(mdp: &Mdp) -> Result<(Policy, ValueVector), SolverError> {
    let mut best: Option<(Policy, ValueVector, f64)> = None;
    for pi in mdp.all_policies() {
        let v = evaluate_policy(mdp, &pi)?;
        let total: f64 = v.iter().sum();
        if best.as_ref().is_none_or(|(_, _, b)| total > *b) {
            best = Some((pi, v, total));
        }
    }
    let (pi, v, _) = best.expect("at least one policy");
    Ok((pi.with_values(v.clone()), v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::*;
    use crate::mdp::{Action, ActionId};

    #[test]
    fn m2_mix_optimum() {
        let sol = solve_exact(&m2_mix()).unwrap();
        assert_eq!(sol.policy.choice, vec![ActionId(0), ActionId(2)]);
        assert!((sol.values[0] - 9.1).abs() < 1e-10 && (sol.values[1] - 8.9).abs() < 1e-10);
        assert!((sol.delta - 0.01).abs() < 1e-10);
        assert!(sol.unique && sol.cross_checked);
    }

    #[test]
    fn m2_optimum() {
        let sol = solve_exact(&m2()).unwrap();
        assert_eq!(sol.policy.choice, vec![ActionId(1), ActionId(2)]);
        assert!((sol.values[0] - 0.68 / 0.19).abs() < 1e-10);
        assert!((sol.values[1] - (0.2 + 0.9 * 0.68 / 0.19)).abs() < 1e-10);
        assert!((sol.values[0] - 3.5789).abs() < 1e-4 && (sol.values[1] - 3.4211).abs() < 1e-4);
    }

    #[test]
    fn zero_rewards_are_flagged_non_unique() {
        let m = Mdp::new(
            2,
            0.9,
            vec![
                Action::new("a", 0, vec![1.0, 0.0], 0.0),
                Action::new("b", 0, vec![0.0, 1.0], 0.0),
                Action::new("c", 1, vec![0.3, 0.7], 0.0),
            ],
        )
        .unwrap();
        let sol = solve_exact(&m).unwrap();
        assert!(sol.values.iter().all(|v| v.abs() < 1e-12));
        assert!(!sol.unique);
    }
}
