//! Set dynamics of policy iteration on two-state MDPs.

use serde::{Deserialize, Serialize};

use crate::bellman::evaluate_policy;
use crate::error::TwoStateError;
use crate::gen::{generate, GenSpec, Structure};
use crate::mdp::{ActionId, ActionSet, Mdp, Policy, StateId, ADV_TOL};
use crate::solvers::{policy_iteration, solve_exact};

/// Slope gaps at or below this make an instance degenerate.
pub const DEGENERATE_TOL: f64 = 1e-9;

/// How the certificate chooses its state.
pub const STATE_RULE: &str = "larger per-state gap between the extreme-slope policies";

fn check_two_state(mdp: &Mdp) -> Result<(), TwoStateError> {
    if mdp.n_states() != 2 {
        return Err(TwoStateError::NotTwoState(mdp.n_states()));
    }
    Ok(())
}

fn check_cover(mdp: &Mdp, set: &ActionSet) -> Result<(), TwoStateError> {
    if !set.covers_all_states(mdp) {
        return Err(TwoStateError::Uncovered);
    }
    Ok(())
}

/// All policies formed by `set`, each carrying its values. Ordered with the
/// state-0 action varying slowest.
pub fn formed_policies(mdp: &Mdp, set: &ActionSet) -> Result<Vec<Policy>, TwoStateError> {
    check_two_state(mdp)?;
    check_cover(mdp, set)?;
    let mut out = Vec::new();
    for a in set.at_state(mdp, 0) {
        for b in set.at_state(mdp, 1) {
            let pi = Policy::new(vec![a, b]);
            let v = evaluate_policy(mdp, &pi)?;
            out.push(pi.with_values(v));
        }
    }
    Ok(out)
}

fn values_of(mdp: &Mdp, pi: &Policy) -> Result<Vec<f64>, TwoStateError> {
    match &pi.values {
        Some(v) => Ok(v.as_slice().to_vec()),
        None => Ok(evaluate_policy(mdp, pi)?.into_inner()),
    }
}

/// Actions of `set` that maximize the advantage at some policy of `policies`.
/// Actions within [`ADV_TOL`] of the maximum are all kept.
pub fn produced_actions(mdp: &Mdp, policies: &[Policy], set: &ActionSet) -> Result<ActionSet, TwoStateError> {
    check_two_state(mdp)?;
    check_cover(mdp, set)?;
    let mut out = ActionSet::empty(mdp);
    for pi in policies {
        let v = values_of(mdp, pi)?;
        for s in 0..2 {
            let scored: Vec<(ActionId, f64)> = set.at_state(mdp, s).map(|a| (a, mdp.advantage_unchecked(a, &v))).collect();
            let best = scored.iter().map(|&(_, x)| x).fold(f64::NEG_INFINITY, f64::max);
            for &(a, x) in &scored {
                if x >= best - ADV_TOL {
                    out.insert(a);
                }
            }
        }
    }
    Ok(out)
}

/// One step `A -> produced(formed(A))`.
pub fn dynamics_step(mdp: &Mdp, set: &ActionSet) -> Result<ActionSet, TwoStateError> {
    let formed = formed_policies(mdp, set)?;
    produced_actions(mdp, &formed, set)
}

/// `A_0 = all actions, A_{t+1} = produced(formed(A_t))` until a fixpoint.
pub fn set_dynamics(mdp: &Mdp) -> Result<Vec<ActionSet>, TwoStateError> {
    let mut seq = vec![ActionSet::full(mdp)];
    loop {
        let cur = seq.last().expect("non-empty");
        let next = dynamics_step(mdp, cur)?;
        if next == *cur {
            return Ok(seq);
        }
        seq.push(next);
    }
}

/// Advantages along the inequality chain at one formed policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub policy: Vec<ActionId>,
    pub adv_inefficient: f64,
    pub adv_low: f64,
    pub adv_high: f64,
    pub adv_dominating: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InefficiencyCertificate {
    /// Formed policy with the smallest slope `V(1) - V(2)`.
    pub pi_r: Vec<ActionId>,
    /// Formed policy with the largest slope.
    pub pi_l: Vec<ActionId>,
    pub slope_r: f64,
    pub slope_l: f64,
    pub state: StateId,
    pub state_rule: String,
    /// State the cross-policy comparison `V^{pi_r}(1) < V^{pi_l}(2)` would pick.
    pub literal_state: StateId,
    /// Value gap between the extreme policies at `state`.
    pub gap: f64,
    pub inefficient: ActionId,
    pub dominating: ActionId,
    /// Rewards of the two self-loop gadgets at `state`.
    pub reward_low: f64,
    pub reward_high: f64,
    pub chain: Vec<ChainRow>,
    /// Smallest slack over all chain links.
    pub min_margin: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Inefficiency {
    Certificate(Box<InefficiencyCertificate>),
    /// Extreme slopes coincide within tolerance: every formed policy is
    /// parallel and no elimination is claimed.
    Degenerate { slope_r: f64, slope_l: f64 },
}

/// Names an action of `set` that no formed policy produces, with the chain
/// of advantage inequalities proving it.
pub fn inefficiency_certificate(mdp: &Mdp, set: &ActionSet) -> Result<Inefficiency, TwoStateError> {
    check_two_state(mdp)?;
    check_cover(mdp, set)?;
    if set.len() < 3 {
        return Err(TwoStateError::TooFewActions(set.len()));
    }
    let formed = formed_policies(mdp, set)?;
    let slope = |p: &Policy| {
        let v = p.values.as_ref().expect("formed policies carry values");
        v[0] - v[1]
    };
    let pi_r = formed
        .iter()
        .fold(&formed[0], |best, p| if slope(p) < slope(best) { p } else { best });
    let pi_l = formed
        .iter()
        .fold(&formed[0], |best, p| if slope(p) > slope(best) { p } else { best });
    let (vr, vl) = (pi_r.values.clone().unwrap(), pi_l.values.clone().unwrap());
    let g = mdp.gamma();
    // Positive gap at state 0 means pi_l is higher there; at state 1, pi_r is.
    let gap0 = vl[0] - vr[0];
    let gap1 = vr[1] - vl[1];
    let (state, gap, lo, hi) = if gap0 >= gap1 {
        (0, gap0, pi_r, pi_l)
    } else {
        (1, gap1, pi_l, pi_r)
    };
    if (1.0 - g) * gap <= DEGENERATE_TOL {
        return Ok(Inefficiency::Degenerate {
            slope_r: slope(pi_r),
            slope_l: slope(pi_l),
        });
    }
    let literal_state = if vr[0] < vl[1] { 0 } else { 1 };
    let v_lo = lo.values.as_ref().unwrap()[state];
    let v_hi = hi.values.as_ref().unwrap()[state];
    let c = lo.choice[state];
    let b = hi.choice[state];
    let reward_low = (1.0 - g) * v_lo;
    let reward_high = (1.0 - g) * v_hi;
    let mut chain = Vec::with_capacity(formed.len());
    let mut min_margin = f64::INFINITY;
    for p in &formed {
        let v = p.values.as_ref().unwrap();
        let row = ChainRow {
            policy: p.choice.clone(),
            adv_inefficient: mdp.advantage_unchecked(c, v),
            adv_low: reward_low + (g - 1.0) * v[state],
            adv_high: reward_high + (g - 1.0) * v[state],
            adv_dominating: mdp.advantage_unchecked(b, v),
        };
        min_margin = min_margin
            .min(row.adv_low - row.adv_inefficient)
            .min(row.adv_high - row.adv_low)
            .min(row.adv_dominating - row.adv_high);
        chain.push(row);
    }
    let strict_ok = chain.iter().all(|r| r.adv_high - r.adv_low > DEGENERATE_TOL);
    Ok(Inefficiency::Certificate(Box::new(InefficiencyCertificate {
        pi_r: pi_r.choice.clone(),
        pi_l: pi_l.choice.clone(),
        slope_r: slope(pi_r),
        slope_l: slope(pi_l),
        state,
        state_rule: STATE_RULE.to_string(),
        literal_state,
        gap,
        inefficient: c,
        dominating: b,
        reward_low,
        reward_high,
        chain,
        min_margin,
        holds: strict_ok && min_margin >= -1e-9,
    })))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiBoundReport {
    pub n_actions: usize,
    /// Largest number of evaluate/improve rounds over all starts.
    pub max_pi_iters: usize,
    pub starts: usize,
    /// `|A_t|` along the set dynamics.
    pub set_sizes: Vec<usize>,
    pub degenerate_steps: usize,
    pub certificates: usize,
}

/// Runs PI from every start and the set dynamics, failing with the
/// instance when an iteration or elimination bound is broken.
pub fn verify_pi_bound(mdp: &Mdp) -> Result<PiBoundReport, TwoStateError> {
    check_two_state(mdp)?;
    let violated = |reason: String| TwoStateError::BoundViolated {
        reason,
        instance: Box::new(mdp.clone()),
    };
    let m = mdp.n_actions();
    let mut max_pi_iters = 0;
    let starts = mdp.all_policies();
    let seq = set_dynamics(mdp)?;
    for start in &starts {
        let (_, trace) = policy_iteration(mdp, start)?;
        let rounds = trace.records.len();
        max_pi_iters = max_pi_iters.max(rounds);
        if rounds > m {
            return Err(violated(format!("policy iteration took {rounds} rounds with {m} actions")));
        }
        // Every improvement stays inside the set dynamics.
        for (t, rec) in trace.records.iter().enumerate().skip(1) {
            let set = &seq[t.min(seq.len() - 1)];
            if let Some(a) = rec.policy.choice.iter().find(|&&a| !set.contains(a)) {
                return Err(violated(format!("policy iteration step {t} chose {a} outside A_{t}")));
            }
        }
    }
    let mut degenerate_steps = 0;
    let mut certificates = 0;
    for w in seq.windows(2) {
        let (cur, next) = (&w[0], &w[1]);
        if cur.len() < 3 {
            continue;
        }
        match inefficiency_certificate(mdp, cur)? {
            Inefficiency::Degenerate { .. } => degenerate_steps += 1,
            Inefficiency::Certificate(cert) => {
                certificates += 1;
                if !cert.holds {
                    return Err(violated(format!("inefficiency chain fails with margin {:e}", cert.min_margin)));
                }
                if next.contains(cert.inefficient) {
                    return Err(violated(format!("certified action {} was produced", cert.inefficient)));
                }
            }
        }
    }
    let last = seq.last().expect("non-empty");
    if last.len() >= 3 {
        match inefficiency_certificate(mdp, last)? {
            Inefficiency::Degenerate { .. } => degenerate_steps += 1,
            Inefficiency::Certificate(_) => {
                return Err(violated(format!("set dynamics stalled at {} actions", last.len())));
            }
        }
    }
    let exact = solve_exact(mdp)?;
    if exact.unique && (last.len() != 2 || !exact.policy.choice.iter().all(|&a| last.contains(a))) {
        return Err(violated("set dynamics fixpoint differs from the optimal policy".into()));
    }
    Ok(PiBoundReport {
        n_actions: m,
        max_pi_iters,
        starts: starts.len(),
        set_sizes: seq.iter().map(ActionSet::len).collect(),
        degenerate_steps,
        certificates,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub instances: usize,
    pub max_actions: usize,
    pub seed: u64,
    pub violations: usize,
    pub degenerate: usize,
    pub certificates: usize,
    /// Largest `max_pi_iters / |A|` seen.
    pub worst_ratio: f64,
    /// Reasons for the first few violations.
    pub failures: Vec<String>,
}

/// Discount factors cycled through by [`random_suite`].
pub const SUITE_GAMMAS: [f64; 3] = [0.5, 0.9, 0.99];

/// Instance `i` of the random suite: dense rows, `1..=max_actions/2` actions
/// per state.
pub fn suite_instance(seed: u64, i: usize, max_actions: usize) -> Result<Mdp, TwoStateError> {
    let hi = (max_actions / 2).max(1);
    let spec = GenSpec::new(
        2,
        (1, hi),
        SUITE_GAMMAS[i % SUITE_GAMMAS.len()],
        seed.wrapping_add(i as u64),
        Structure::Dense,
    );
    generate(&spec).map_err(|e| match e {
        crate::error::GenError::Model(m) => TwoStateError::Model(m),
        crate::error::GenError::Solver(s) => TwoStateError::Solver(s),
        other => TwoStateError::Model(crate::error::MdpError::NonFinite(other.to_string())),
    })
}

/// Verifies the bounds on `count` random instances.
pub fn random_suite(count: usize, max_actions: usize, seed: u64) -> Result<SuiteReport, TwoStateError> {
    let mut rep = SuiteReport {
        instances: count,
        max_actions,
        seed,
        ..Default::default()
    };
    for i in 0..count {
        let mdp = suite_instance(seed, i, max_actions)?;
        match verify_pi_bound(&mdp) {
            Ok(r) => {
                rep.degenerate += r.degenerate_steps;
                rep.certificates += r.certificates;
                rep.worst_ratio = rep.worst_ratio.max(r.max_pi_iters as f64 / r.n_actions as f64);
            }
            Err(TwoStateError::BoundViolated { reason, .. }) => {
                rep.violations += 1;
                if rep.failures.len() < 10 {
                    rep.failures.push(format!("instance {i}: {reason}"));
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(rep)
}
