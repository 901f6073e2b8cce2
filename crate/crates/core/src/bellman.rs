//! Bellman operators and exact policy evaluation.

use nalgebra::{DMatrix, DVector};

use crate::error::MdpError;
use crate::mdp::{ActionId, ActionSet, Mdp, Policy, ValueVector, ADV_TOL};

/// `(T^pi v)(s) = r^{pi(s)} + gamma * p^{pi(s)} . v`
pub fn bellman_policy(mdp: &Mdp, pi: &Policy, v: &[f64]) -> Result<ValueVector, MdpError> {
    mdp.check_policy(pi)?;
    mdp.check_dims(v)?;
    Ok(pi.choice.iter().map(|&a| mdp.q_value(a, v)).collect::<Vec<_>>().into())
}

/// Greedy backup over `active`. Returns the maximal lookahead values and the
/// argmax policy; among actions whose advantage is within [`ADV_TOL`] of the
/// best, the lowest id is chosen.
pub fn bellman_optimal(mdp: &Mdp, v: &[f64], active: &ActionSet) -> Result<(ValueVector, Policy), MdpError> {
    mdp.check_dims(v)?;
    let mut values = Vec::with_capacity(mdp.n_states());
    let mut choice = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        let (q, a) = greedy_at(mdp, v, active.at_state(mdp, s)).ok_or(MdpError::NoActiveAction(s))?;
        values.push(q);
        choice.push(a);
    }
    Ok((values.into(), Policy::new(choice)))
}

/// Best lookahead value at `s` and the tie-broken argmax.
pub(crate) fn greedy_at(
    mdp: &Mdp,
    v: &[f64],
    candidates: impl Iterator<Item = ActionId>,
) -> Option<(f64, ActionId)> {
    let scored: Vec<(ActionId, f64)> = candidates.map(|a| (a, mdp.q_value(a, v))).collect();
    let best = scored.iter().map(|&(_, q)| q).fold(f64::NEG_INFINITY, f64::max);
    if scored.is_empty() {
        return None;
    }
    // q and the advantage differ by v(s), so the tolerance applies to either.
    let pick = scored
        .iter()
        .find(|&&(_, q)| q >= best - ADV_TOL)
        .map(|&(a, _)| a)
        .expect("non-empty");
    Some((best, pick))
}

/// Solves `(I - gamma P_pi) V = r_pi`.
pub fn evaluate_policy(mdp: &Mdp, pi: &Policy) -> Result<ValueVector, MdpError> {
    mdp.check_policy(pi)?;
    let n = mdp.n_states();
    let g = mdp.gamma();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (s, &a) in pi.choice.iter().enumerate() {
        let act = mdp.action(a);
        for (j, p) in act.probs.iter().enumerate() {
            m[(s, j)] -= g * p;
        }
        rhs[s] = act.reward;
    }
    let sol = m.lu().solve(&rhs).ok_or(MdpError::SingularSystem)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(MdpError::SingularSystem);
    }
    Ok(sol.iter().copied().collect::<Vec<_>>().into())
}
