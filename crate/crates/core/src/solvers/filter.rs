use crate::mdp::{ActionId, ActionSet, Mdp, ADV_TOL};

/// Slack added to an observed advantage after `t` standard backups started
/// from the upper bound `1/(1-gamma)` with rewards in `[0, 1]`:
/// `(1 - gamma p_own) gamma^t / (1 - gamma)`.
///
/// With `e_t = V_t - V*` we have `0 <= e_t <= gamma^t/(1-gamma)` and
/// `adv(a, V*) = adv(a, V_t) + (1-gamma) e_t(s) - gamma sum_{i != s} p_i (e_t(i) - e_t(s))`,
/// which is at most `adv(a, V_t) + (1 - gamma p_s) e_t(s)`.
pub fn filter_threshold(gamma: f64, p_own: f64, t: usize) -> f64 {
    (1.0 - gamma * p_own) * gamma.powi(t as i32) / (1.0 - gamma)
}

/// Removes every active action whose advantage upper bound at `V*` is
/// negative. The last active action of a state is never removed.
pub fn filter_appendix(mdp: &Mdp, t: usize, v: &[f64], active: &ActionSet) -> ActionSet {
    let g = mdp.gamma();
    let mut out = active.clone();
    for s in 0..mdp.n_states() {
        let scored: Vec<(ActionId, f64)> = active
            .at_state(mdp, s)
            .map(|a| {
                let p_own = mdp.action(a).probs[s];
                (a, mdp.advantage_unchecked(a, v) + filter_threshold(g, p_own, t))
            })
            .collect();
        let doomed: Vec<ActionId> = scored.iter().filter(|(_, ub)| *ub < -ADV_TOL).map(|&(a, _)| a).collect();
        if doomed.len() == scored.len() {
            // Keep the action with the largest bound.
            let keep = scored
                .iter()
                .fold(None::<(ActionId, f64)>, |best, &(a, ub)| match best {
                    Some((_, b)) if b >= ub => best,
                    _ => Some((a, ub)),
                })
                .map(|(a, _)| a);
            for a in doomed.into_iter().filter(|&a| Some(a) != keep) {
                out.remove(a);
            }
        } else {
            for a in doomed {
                out.remove(a);
            }
        }
    }
    out
}
