//! MDP data model.
//!
//! Every action belongs to exactly one state. An action `a` at state `s` with
//! transition row `p` and reward `r` embeds as the action vector
//! `(r, c_1, .., c_n)` with `c_i = gamma * p_i` for `i != s` and
//! `c_s = gamma * p_s - 1`. The advantage of `a` against a value vector `V`
//! is the inner product `r + sum_i c_i V(i)`.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::MdpError;

/// Row-sum tolerance for probability rows.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Two advantages closer than this are treated as equal.
pub const ADV_TOL: f64 = 1e-9;

pub type StateId = usize;

/// Position of an action in [`Mdp::actions`]. Ordering by this index is the
/// tie-breaking order used by every argmax in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// External identifier, unique within an MDP.
    pub name: String,
    pub state: StateId,
    pub probs: Vec<f64>,
    pub reward: f64,
}

impl Action {
    pub fn new(name: impl Into<String>, state: StateId, probs: Vec<f64>, reward: f64) -> Self {
        Self {
            name: name.into(),
            state,
            probs,
            reward,
        }
    }
}

/// Action vector without the implicit bias pairing: `reward` is coordinate 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionVector {
    pub reward: f64,
    pub coeffs: Vec<f64>,
}

impl ActionVector {
    /// `reward + coeffs . v`
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.reward + self.coeffs.iter().zip(v).map(|(c, x)| c * x).sum::<f64>()
    }
}

/// State values of a (pseudo-)policy. The bias coordinate is not stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn span(&self) -> f64 {
        span(&self.0)
    }

    /// Componentwise `self - other`.
    pub fn sub(&self, other: &ValueVector) -> ValueVector {
        ValueVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn max_abs_diff(&self, other: &ValueVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for ValueVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ValueVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `max(v) - min(v)`; zero for an empty slice.
pub fn span(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// Deterministic stationary policy, one action per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub choice: Vec<ActionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<ValueVector>,
}

impl Policy {
    pub fn new(choice: Vec<ActionId>) -> Self {
        Self {
            choice,
            values: None,
        }
    }

    pub fn with_values(mut self, values: ValueVector) -> Self {
        self.values = Some(values);
        self
    }

    pub fn action(&self, s: StateId) -> ActionId {
        self.choice[s]
    }

    pub fn contains(&self, a: ActionId) -> bool {
        self.choice.contains(&a)
    }

    pub fn same_actions(&self, other: &Policy) -> bool {
        self.choice == other.choice
    }
}

impl Index<StateId> for Policy {
    type Output = ActionId;
    fn index(&self, s: StateId) -> &ActionId {
        &self.choice[s]
    }
}

/// Subset of an MDP's actions, stored as a membership mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSet {
    mask: Vec<bool>,
    len: usize,
}

impl ActionSet {
    pub fn full(mdp: &Mdp) -> Self {
        Self {
            mask: vec![true; mdp.n_actions()],
            len: mdp.n_actions(),
        }
    }

    pub fn empty(mdp: &Mdp) -> Self {
        Self {
            mask: vec![false; mdp.n_actions()],
            len: 0,
        }
    }

    pub fn from_ids(mdp: &Mdp, ids: impl IntoIterator<Item = ActionId>) -> Self {
        let mut set = Self::empty(mdp);
        for a in ids {
            set.insert(a);
        }
        set
    }

    pub fn contains(&self, a: ActionId) -> bool {
        self.mask.get(a.0).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, a: ActionId) -> bool {
        if self.mask[a.0] {
            return false;
        }
        self.mask[a.0] = true;
        self.len += 1;
        true
    }

    pub fn remove(&mut self, a: ActionId) -> bool {
        if !self.mask[a.0] {
            return false;
        }
        self.mask[a.0] = false;
        self.len -= 1;
        true
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| ActionId(i))
    }

    /// Members of `self` located at state `s`, in id order.
    pub fn at_state<'a>(&'a self, mdp: &'a Mdp, s: StateId) -> impl Iterator<Item = ActionId> + 'a {
        mdp.actions_at(s).iter().copied().filter(|&a| self.contains(a))
    }

    pub fn count_at(&self, mdp: &Mdp, s: StateId) -> usize {
        self.at_state(mdp, s).count()
    }

    pub fn covers_all_states(&self, mdp: &Mdp) -> bool {
        (0..mdp.n_states()).all(|s| self.count_at(mdp, s) > 0)
    }

    pub fn ids(&self) -> Vec<ActionId> {
        self.iter().collect()
    }
}

/// Finite discounted MDP with state-unique actions.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    n_states: usize,
    gamma: f64,
    actions: Vec<Action>,
    by_state: Vec<Vec<ActionId>>,
}

impl Mdp {
    /// Builds and validates an MDP.
    pub fn new(n_states: usize, gamma: f64, actions: Vec<Action>) -> Result<Self, MdpError> {
        let mdp = Self::assemble(n_states, gamma, actions)?;
        mdp.validate()?;
        Ok(mdp)
    }

    /// Builds the per-state index without checking probability rows or gamma.
    /// Transform outputs go through here: their own-state entries may leave
    /// `[0, 1]` while the action-vector invariants still hold.
    pub(crate) fn assemble(n_states: usize, gamma: f64, actions: Vec<Action>) -> Result<Self, MdpError> {
        if n_states == 0 {
            return Err(MdpError::NoStates);
        }
        let mut by_state = vec![Vec::new(); n_states];
        for (i, a) in actions.iter().enumerate() {
            if a.state >= n_states {
                return Err(MdpError::StateOutOfRange {
                    action: a.name.clone(),
                    state: a.state,
                    n_states,
                });
            }
            if a.probs.len() != n_states {
                return Err(MdpError::DimensionMismatch {
                    expected: n_states,
                    got: a.probs.len(),
                });
            }
            by_state[a.state].push(ActionId(i));
        }
        Ok(Self {
            n_states,
            gamma,
            actions,
            by_state,
        })
    }

    /// Checks every model invariant and reports the first violation.
    pub fn validate(&self) -> Result<(), MdpError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(MdpError::GammaOutOfRange(self.gamma));
        }
        let mut seen = HashSet::new();
        for a in &self.actions {
            if !seen.insert(a.name.as_str()) {
                return Err(MdpError::DuplicateAction(a.name.clone()));
            }
            if !a.reward.is_finite() || a.probs.iter().any(|p| !p.is_finite()) {
                return Err(MdpError::NonFinite(a.name.clone()));
            }
            if let Some((i, &p)) = a.probs.iter().enumerate().find(|(_, &p)| p < 0.0) {
                return Err(MdpError::NegativeProbability {
                    action: a.name.clone(),
                    index: i,
                    value: p,
                });
            }
            let sum: f64 = a.probs.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::RowSum {
                    action: a.name.clone(),
                    sum,
                });
            }
        }
        if let Some(s) = self.by_state.iter().position(Vec::is_empty) {
            return Err(MdpError::EmptyState(s));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, a: ActionId) -> &Action {
        &self.actions[a.0]
    }

    pub fn actions_at(&self, s: StateId) -> &[ActionId] {
        &self.by_state[s]
    }

    pub fn action_ids(&self) -> impl Iterator<Item = ActionId> {
        (0..self.actions.len()).map(ActionId)
    }

    pub fn find(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|a| a.name == name).map(ActionId)
    }

    pub fn into_actions(self) -> Vec<Action> {
        self.actions
    }

    pub(crate) fn check_action(&self, a: ActionId) -> Result<(), MdpError> {
        if a.0 < self.actions.len() {
            Ok(())
        } else {
            Err(MdpError::UnknownAction(a.0))
        }
    }

    pub(crate) fn check_dims(&self, v: &[f64]) -> Result<(), MdpError> {
        if v.len() == self.n_states {
            Ok(())
        } else {
            Err(MdpError::DimensionMismatch {
                expected: self.n_states,
                got: v.len(),
            })
        }
    }

    /// Checks that `pi` picks exactly one action of the right state everywhere.
    pub fn check_policy(&self, pi: &Policy) -> Result<(), MdpError> {
        if pi.choice.len() != self.n_states {
            return Err(MdpError::DimensionMismatch {
                expected: self.n_states,
                got: pi.choice.len(),
            });
        }
        for (s, &a) in pi.choice.iter().enumerate() {
            self.check_action(a)?;
            if self.action(a).state != s {
                return Err(MdpError::ForeignAction { action: a.0, state: s });
            }
        }
        Ok(())
    }

    pub fn action_vector(&self, a: ActionId) -> Result<ActionVector, MdpError> {
        self.check_action(a)?;
        Ok(self.action_vector_unchecked(a))
    }

    pub(crate) fn action_vector_unchecked(&self, a: ActionId) -> ActionVector {
        let act = &self.actions[a.0];
        let mut coeffs: Vec<f64> = act.probs.iter().map(|p| self.gamma * p).collect();
        coeffs[act.state] -= 1.0;
        ActionVector {
            reward: act.reward,
            coeffs,
        }
    }

    /// One-step lookahead `r + gamma * p . v`.
    #[inline]
    pub(crate) fn q_value(&self, a: ActionId, v: &[f64]) -> f64 {
        let act = &self.actions[a.0];
        act.reward + self.gamma * act.probs.iter().zip(v).map(|(p, x)| p * x).sum::<f64>()
    }

    #[inline]
    pub(crate) fn advantage_unchecked(&self, a: ActionId, v: &[f64]) -> f64 {
        self.q_value(a, v) - v[self.actions[a.0].state]
    }

    /// Advantage of `a` with respect to the pseudo-policy `v`.
    pub fn advantage(&self, a: ActionId, v: &[f64]) -> Result<f64, MdpError> {
        self.check_action(a)?;
        self.check_dims(v)?;
        Ok(self.advantage_unchecked(a, v))
    }

    /// Policy choosing, in every state, the action with the largest reward.
    pub fn greedy_reward_policy(&self) -> Policy {
        let choice = self
            .by_state
            .iter()
            .map(|ids| {
                ids.iter()
                    .copied()
                    .fold(None::<ActionId>, |best, a| match best {
                        Some(b) if self.action(b).reward >= self.action(a).reward => Some(b),
                        _ => Some(a),
                    })
                    .expect("validated MDP has an action per state")
            })
            .collect();
        Policy::new(choice)
    }

    /// Transition matrix rows and rewards of `pi`.
    pub fn policy_matrix(&self, pi: &Policy) -> (Vec<Vec<f64>>, Vec<f64>) {
        pi.choice
            .iter()
            .map(|&a| {
                let act = self.action(a);
                (act.probs.clone(), act.reward)
            })
            .unzip()
    }

    /// Every deterministic policy, in lexicographic order of per-state ids.
    pub fn all_policies(&self) -> Vec<Policy> {
        let mut out = vec![Vec::with_capacity(self.n_states)];
        for s in 0..self.n_states {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    self.by_state[s].iter().map(move |&a| {
                        let mut p = prefix.clone();
                        p.push(a);
                        p
                    })
                })
                .collect();
        }
        out.into_iter().map(Policy::new).collect()
    }

    /// Number of deterministic policies, saturating at `usize::MAX`.
    pub fn policy_count(&self) -> usize {
        self.by_state.iter().map(Vec::len).fold(1usize, usize::saturating_mul)
    }

    pub(crate) fn with_actions(&self, gamma: f64, actions: Vec<Action>) -> Mdp {
        Mdp {
            n_states: self.n_states,
            gamma,
            actions,
            by_state: self.by_state.clone(),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn m2_mix_is_valid() {
        m2_mix().validate().unwrap();
    }

    #[test]
    fn row_sum_violation() {
        let err = Mdp::new(2, 0.9, vec![Action::new("a", 0, vec![0.5, 0.6], 0.0), Action::new("b", 1, vec![0.0, 1.0], 0.0)])
            .unwrap_err();
        assert!(matches!(err, MdpError::RowSum { .. }), "{err:?}");
    }

    #[test]
    fn gamma_domain() {
        for g in [1.0, 0.0, -0.5, f64::NAN] {
            let err = Mdp::new(1, g, vec![Action::new("a", 0, vec![1.0], 0.0)]).unwrap_err();
            assert!(matches!(err, MdpError::GammaOutOfRange(_)));
        }
    }

    #[test]
    fn negative_probability_and_empty_state() {
        let err = Mdp::new(2, 0.5, vec![Action::new("a", 0, vec![1.5, -0.5], 0.0), Action::new("b", 1, vec![0.0, 1.0], 0.0)])
            .unwrap_err();
        assert!(matches!(err, MdpError::NegativeProbability { index: 1, .. }));
        let err = Mdp::new(2, 0.5, vec![Action::new("a", 0, vec![1.0, 0.0], 0.0)]).unwrap_err();
        assert_eq!(err, MdpError::EmptyState(1));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Mdp::new(1, 0.5, vec![Action::new("a", 0, vec![1.0], 0.0), Action::new("a", 0, vec![1.0], 1.0)])
            .unwrap_err();
        assert_eq!(err, MdpError::DuplicateAction("a".into()));
    }

    #[test]
    fn action_vector_of_mixing_action() {
        let m = m2_mix();
        let v = m.action_vector(ActionId(0)).unwrap();
        assert_eq!(v.reward, 1.0);
        assert!((v.coeffs[0] + 0.55).abs() < 1e-15);
        assert!((v.coeffs[1] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn self_loop_action_vector() {
        let m = m2();
        let v = m.action_vector(ActionId(0)).unwrap();
        assert!((v.coeffs[0] - (0.9 - 1.0)).abs() < 1e-15);
        assert_eq!(v.coeffs[1], 0.0);
        assert!(m.action_vector(ActionId(9)).is_err());
    }

    #[test]
    fn coefficients_sum_to_gamma_minus_one() {
        for m in [m2(), m2_mix()] {
            for a in m.action_ids() {
                let v = m.action_vector(a).unwrap();
                let s: f64 = v.coeffs.iter().sum();
                assert!((s - (m.gamma() - 1.0)).abs() < 1e-10);
                let own = m.action(a).state;
                assert!(v.coeffs[own] <= 0.0);
                assert!(v.coeffs.iter().enumerate().all(|(i, &c)| i == own || c >= 0.0));
            }
        }
    }

    #[test]
    fn advantage_matches_inner_product() {
        let m = m2_mix();
        let v = [9.1, 8.9];
        let adv = m.advantage(ActionId(1), &v).unwrap();
        assert!((adv + 0.01).abs() < 1e-12, "{adv}");
        let inner = m.action_vector(ActionId(1)).unwrap().dot(&v);
        assert!((adv - inner).abs() < 1e-12);
        assert!(m.advantage(ActionId(1), &[1.0]).is_err());
    }

    #[test]
    fn self_loop_advantage_at_constant_values() {
        let m = m2();
        let adv = m.advantage(ActionId(0), &[3.0, 3.0]).unwrap();
        assert!((adv - (0.9 - 1.0) * 3.0).abs() < 1e-12);
    }

    #[test]
    fn span_basics() {
        assert!((span(&[9.1, 8.9]) - 0.2).abs() < 1e-12);
        assert_eq!(span(&[4.0, 4.0, 4.0]), 0.0);
        let v = [1.0, -2.0, 0.5];
        let shifted: Vec<f64> = v.iter().map(|x| x + 7.25).collect();
        assert!((span(&v) - span(&shifted)).abs() < 1e-12);
    }

    #[test]
    fn enumerates_all_policies() {
        let m = m2_mix();
        let all = m.all_policies();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0].choice, vec![ActionId(0), ActionId(2)]);
        assert_eq!(all[3].choice, vec![ActionId(1), ActionId(3)]);
        assert_eq!(m.policy_count(), 4);
    }

    #[test]
    fn foreign_action_in_policy() {
        let m = m2();
        let err = m.check_policy(&Policy::new(vec![ActionId(2), ActionId(3)])).unwrap_err();
        assert!(matches!(err, MdpError::ForeignAction { action: 2, state: 0 }));
    }
}
