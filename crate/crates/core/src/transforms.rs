//! Advantage-preserving MDP transforms.
//!
//! * Value shift at state `s` by `delta`: rewards move by `-c^a_s * delta`,
//!   every policy value at `s` moves by `+delta`, advantages are unchanged.
//! * Rediscount at state `s` to `gamma'`: the `s` coordinate of every action
//!   vector moves by `-(gamma - gamma')`, values map through [`ValueMap`],
//!   advantages and value spans are unchanged.

use serde::{Deserialize, Serialize};

use crate::error::TransformError;
use crate::mdp::{Action, Mdp, Policy, StateId, ValueVector, ADV_TOL};
use crate::solvers::solve_exact;

/// Lower clamp for discount factors produced by rediscounting.
pub const GAMMA_MIN: f64 = 1e-6;

/// Cross-state coefficients in `[-SAFE_TOL, 0)` count as zero.
const SAFE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformStep {
    ValueShift { state: StateId, delta: f64 },
    Rediscount { state: StateId, gamma: f64 },
}

/// Ordered record of applied transforms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformLog {
    pub original_gamma: f64,
    pub steps: Vec<TransformStep>,
}

impl TransformLog {
    pub fn new(original_gamma: f64) -> Self {
        Self {
            original_gamma,
            steps: Vec::new(),
        }
    }

    /// Re-applies every step to `mdp` (which must be the original model).
    /// Rediscount steps are replayed without the safety check since they were
    /// checked when recorded.
    pub fn replay(&self, mdp: &Mdp) -> Result<Mdp, TransformError> {
        let mut cur = mdp.clone();
        for step in &self.steps {
            cur = match *step {
                TransformStep::ValueShift { state, delta } => shift_state_values(&cur, state, delta)?,
                TransformStep::Rediscount { state, gamma } => rediscount_state_forced(&cur, state, gamma)?.0,
            };
        }
        Ok(cur)
    }

    /// Applies the inverse steps in reverse order to a transformed model.
    pub fn undo(&self, transformed: &Mdp) -> Result<Mdp, TransformError> {
        let mut gammas = Vec::with_capacity(self.steps.len());
        let mut g = self.original_gamma;
        for step in &self.steps {
            gammas.push(g);
            if let TransformStep::Rediscount { gamma, .. } = *step {
                g = gamma;
            }
        }
        let mut cur = transformed.clone();
        for (step, &before) in self.steps.iter().zip(&gammas).rev() {
            cur = match *step {
                TransformStep::ValueShift { state, delta } => shift_state_values(&cur, state, -delta)?,
                TransformStep::Rediscount { state, .. } => rediscount_state_forced(&cur, state, before)?.0,
            };
        }
        Ok(cur)
    }

    /// Maps a value vector of the original model to the transformed one.
    pub fn map_values(&self, v: &[f64]) -> ValueVector {
        let mut out = v.to_vec();
        let mut g = self.original_gamma;
        for step in &self.steps {
            match *step {
                TransformStep::ValueShift { state, delta } => out[state] += delta,
                TransformStep::Rediscount { state, gamma } => {
                    out = ValueMap::new(state, g, gamma).apply(&out).into_inner();
                    g = gamma;
                }
            }
        }
        out.into()
    }
}

/// Linear map taking values of the pre-rediscount model to the new one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueMap {
    pub state: StateId,
    /// `(1 - gamma) / (1 - gamma')`
    pub scale: f64,
}

impl ValueMap {
    pub fn new(state: StateId, gamma: f64, gamma_new: f64) -> Self {
        Self {
            state,
            scale: (1.0 - gamma) / (1.0 - gamma_new),
        }
    }

    pub fn apply(&self, v: &[f64]) -> ValueVector {
        let old = v[self.state];
        let new = old * self.scale;
        let shift = new - old;
        v.iter()
            .enumerate()
            .map(|(i, &x)| if i == self.state { new } else { x + shift })
            .collect::<Vec<_>>()
            .into()
    }

    pub fn inverse(&self) -> ValueMap {
        ValueMap {
            state: self.state,
            scale: 1.0 / self.scale,
        }
    }
}

/// Shifts every policy's value at `s` by `delta`.
pub fn shift_state_values(mdp: &Mdp, s: StateId, delta: f64) -> Result<Mdp, TransformError> {
    if s >= mdp.n_states() {
        return Err(crate::error::MdpError::UnknownState(s).into());
    }
    let g = mdp.gamma();
    let actions = mdp
        .actions()
        .iter()
        .map(|a| {
            let c_s = g * a.probs[s] - if a.state == s { 1.0 } else { 0.0 };
            Action {
                reward: a.reward - c_s * delta,
                ..a.clone()
            }
        })
        .collect();
    Ok(mdp.with_actions(g, actions))
}

/// Moves the discount factor to `gamma_new` through state `s`. Fails when a
/// cross-state coefficient at `s` would turn negative.
pub fn rediscount_state(mdp: &Mdp, s: StateId, gamma_new: f64) -> Result<(Mdp, ValueMap), TransformError> {
    rediscount(mdp, s, gamma_new, true)
}

/// [`rediscount_state`] without the safety check.
pub fn rediscount_state_forced(mdp: &Mdp, s: StateId, gamma_new: f64) -> Result<(Mdp, ValueMap), TransformError> {
    rediscount(mdp, s, gamma_new, false)
}

fn rediscount(mdp: &Mdp, s: StateId, gamma_new: f64, check: bool) -> Result<(Mdp, ValueMap), TransformError> {
    if s >= mdp.n_states() {
        return Err(crate::error::MdpError::UnknownState(s).into());
    }
    if !(gamma_new > 0.0 && gamma_new < 1.0) {
        return Err(TransformError::GammaOutOfRange(gamma_new));
    }
    let g = mdp.gamma();
    let drop = g - gamma_new;
    let mut actions = Vec::with_capacity(mdp.n_actions());
    for (idx, a) in mdp.actions().iter().enumerate() {
        let mut coeffs: Vec<f64> = a.probs.iter().map(|p| g * p).collect();
        coeffs[a.state] -= 1.0;
        coeffs[s] -= drop;
        if a.state != s && coeffs[s] < 0.0 {
            if coeffs[s] >= -SAFE_TOL {
                coeffs[s] = 0.0;
            } else if check {
                return Err(TransformError::Unsafe {
                    action: idx,
                    state: s,
                    coeff: coeffs[s],
                });
            }
        }
        coeffs[a.state] += 1.0;
        let probs = coeffs.iter().map(|c| c / gamma_new).collect();
        actions.push(Action {
            probs,
            ..a.clone()
        });
    }
    Ok((mdp.with_actions(gamma_new, actions), ValueMap::new(s, g, gamma_new)))
}

/// Output of [`normalize`].
#[derive(Clone, Debug)]
pub struct Normalized {
    pub mdp: Mdp,
    /// Optimal policy, carrying the optimal values of the input model.
    pub policy: Policy,
    pub log: TransformLog,
    /// False when another policy ties the optimum within tolerance; some
    /// non-optimal rewards are then zero rather than negative.
    pub unique: bool,
}

/// Shifts values so that the optimal policy has value zero everywhere.
pub fn normalize(mdp: &Mdp) -> Result<Normalized, TransformError> {
    let exact = solve_exact(mdp).map_err(Box::new)?;
    let mut log = TransformLog::new(mdp.gamma());
    let mut cur = mdp.clone();
    for (s, &v) in exact.values.iter().enumerate() {
        cur = shift_state_values(&cur, s, -v)?;
        log.steps.push(TransformStep::ValueShift { state: s, delta: -v });
    }
    Ok(Normalized {
        mdp: cur,
        policy: exact.policy.clone().with_values(exact.values.clone()),
        log,
        unique: exact.delta > ADV_TOL,
    })
}

/// Output of [`effective_gamma`].
#[derive(Clone, Debug)]
pub struct EffectiveGamma {
    pub gamma: f64,
    pub gamma_eff: f64,
    /// True when the summed reductions would have gone below [`GAMMA_MIN`].
    pub clamped: bool,
    /// Per-state minimum cross-state coefficient.
    pub min_cross: Vec<f64>,
    pub log: TransformLog,
    pub mdp: Mdp,
}

/// Lowers the discount factor through safe rediscounts, states in index order.
pub fn effective_gamma(mdp: &Mdp) -> Result<EffectiveGamma, TransformError> {
    let order: Vec<StateId> = (0..mdp.n_states()).collect();
    effective_gamma_in_order(mdp, &order)
}

/// [`effective_gamma`] visiting states in `order`.
pub fn effective_gamma_in_order(mdp: &Mdp, order: &[StateId]) -> Result<EffectiveGamma, TransformError> {
    let g = mdp.gamma();
    let min_cross: Vec<f64> = (0..mdp.n_states())
        .map(|i| {
            mdp.actions()
                .iter()
                .filter(|a| a.state != i)
                .map(|a| g * a.probs[i])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let total: f64 = min_cross.iter().filter(|m| m.is_finite()).map(|m| m.max(0.0)).sum();
    let mut log = TransformLog::new(g);
    let mut cur = mdp.clone();
    let mut gamma_cur = g;
    for &i in order {
        let m = min_cross[i];
        if !m.is_finite() || m <= 0.0 {
            continue;
        }
        let target = (gamma_cur - m).max(GAMMA_MIN);
        if target >= gamma_cur {
            continue;
        }
        cur = rediscount_state(&cur, i, target)?.0;
        log.steps.push(TransformStep::Rediscount { state: i, gamma: target });
        gamma_cur = target;
    }
    Ok(EffectiveGamma {
        gamma: g,
        gamma_eff: gamma_cur,
        clamped: g - total < GAMMA_MIN,
        min_cross,
        log,
        mdp: cur,
    })
}
