use std::time::Instant;

use crate::bellman::evaluate_policy;
use crate::error::SolverError;
use crate::mdp::{Mdp, Policy, ADV_TOL};

use super::trace::{IterRecord, RunTrace, StopReason};

/// Greedy improvement against `values`. The incumbent is kept when its
/// advantage is within [`ADV_TOL`] of the best; otherwise the lowest id among
/// the near-maximal actions wins.
pub fn improve_policy(mdp: &Mdp, incumbent: &Policy, values: &[f64]) -> Policy {
    let choice = (0..mdp.n_states())
        .map(|s| {
            let cur = incumbent.choice[s];
            let scored: Vec<_> = mdp
                .actions_at(s)
                .iter()
                .map(|&a| (a, mdp.advantage_unchecked(a, values)))
                .collect();
            let best = scored.iter().map(|&(_, x)| x).fold(f64::NEG_INFINITY, f64::max);
            let cur_adv = mdp.advantage_unchecked(cur, values);
            if cur_adv >= best - ADV_TOL {
                cur
            } else {
                scored
                    .iter()
                    .find(|&&(_, x)| x >= best - ADV_TOL)
                    .map(|&(a, _)| a)
                    .expect("state has actions")
            }
        })
        .collect();
    Policy::new(choice)
}

/// Howard policy iteration from `pi0`.
///
/// Record `t` holds policy `pi_t` and its exact values; the run stops when
/// improvement returns `pi_t` unchanged, so the record count is the number of
/// evaluate/improve rounds.
pub fn policy_iteration(mdp: &Mdp, pi0: &Policy) -> Result<(Policy, RunTrace), SolverError> {
    mdp.check_policy(pi0)?;
    let start = Instant::now();
    let limit = mdp.policy_count().saturating_add(1).min(100_000);
    let mut trace = RunTrace {
        gamma: mdp.gamma(),
        alpha: 1.0,
        records: Vec::new(),
        final_policy: pi0.clone(),
        stop: None,
    };
    let mut pi = Policy::new(pi0.choice.clone());
    for t in 0..limit {
        let values = evaluate_policy(mdp, &pi)?;
        let span_dv = trace.records.last().map(|prev| values.sub(&prev.values).span());
        let next = improve_policy(mdp, &pi, &values);
        trace.records.push(IterRecord {
            t,
            span_v: values.span(),
            values: values.clone(),
            span_dv,
            policy: pi.clone(),
            active: mdp.n_actions(),
            filtered: Vec::new(),
            elapsed: start.elapsed(),
        });
        if next.same_actions(&pi) {
            let out = pi.with_values(values);
            trace.final_policy = out.clone();
            trace.stop = Some(StopReason::PolicyStable);
            return Ok((out, trace));
        }
        pi = next;
    }
    Err(SolverError::PolicyCycle(limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::*;
    use crate::mdp::{Action, ActionId};

    #[test]
    fn m2_mix_from_worst_start() {
        let m = m2_mix();
        let (pi, tr) = policy_iteration(&m, &Policy::new(vec![ActionId(1), ActionId(3)])).unwrap();
        assert_eq!(pi.choice, vec![ActionId(0), ActionId(2)]);
        assert!(tr.records.len() <= m.n_actions());
        let v = pi.values.unwrap();
        assert!((v[0] - 9.1).abs() < 1e-10);
    }

    #[test]
    fn huge_policy_space_does_not_overflow_limit() {
        let n = 70;
        let actions = (0..n)
            .flat_map(|s| {
                (0..3).map(move |j| {
                    let mut p = vec![0.0; n];
                    p[(s + j) % n] = 1.0;
                    Action::new(format!("s{s}a{j}"), s, p, j as f64 / 3.0)
                })
            })
            .collect();
        let m = Mdp::new(n, 0.9, actions).unwrap();
        assert_eq!(m.policy_count(), usize::MAX);
        let start = Policy::new((0..n).map(|s| m.actions_at(s)[0]).collect());
        let (pi, _) = policy_iteration(&m, &start).unwrap();
        assert!(pi.choice.iter().all(|a| a.0 % 3 == 2));
    }

    #[test]
    fn single_action_per_state_takes_one_round() {
        let m = Mdp::new(
            2,
            0.9,
            vec![Action::new("x", 0, vec![0.2, 0.8], 1.0), Action::new("y", 1, vec![0.6, 0.4], 0.0)],
        )
        .unwrap();
        let (_, tr) = policy_iteration(&m, &Policy::new(vec![ActionId(0), ActionId(1)])).unwrap();
        assert_eq!(tr.records.len(), 1);
    }

    #[test]
    fn values_never_decrease() {
        let m = m2();
        for start in m.all_policies() {
            let (_, tr) = policy_iteration(&m, &start).unwrap();
            for w in tr.records.windows(2) {
                for (a, b) in w[0].values.iter().zip(w[1].values.iter()) {
                    assert!(b >= &(a - 1e-10));
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_start() {
        let m = m2();
        assert!(policy_iteration(&m, &Policy::new(vec![ActionId(0)])).is_err());
    }
}
