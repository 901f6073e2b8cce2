use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, MdpError};
use crate::mdp::{span, ActionId, Mdp};
use crate::solvers::{solve_exact, RunTrace};

/// Default number of leading iterations skipped by [`empirical_rate`].
pub const DEFAULT_BURN_IN: usize = 5;

/// Spans at or below this are treated as converged.
pub const SPAN_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvSpanReport {
    /// `|(adv(a1, v) - adv(a2, v)) - (r1 - r2)|`
    pub lhs: f64,
    /// `gamma span(v)` for actions on one state, `(1 + gamma) span(v)` otherwise.
    pub bound: f64,
    pub same_state: bool,
    pub holds: bool,
}

/// Compares the advantage gap of two actions with their reward gap.
pub fn check_adv_span_bound(mdp: &Mdp, a1: ActionId, a2: ActionId, v: &[f64]) -> Result<AdvSpanReport, MdpError> {
    let adv1 = mdp.advantage(a1, v)?;
    let adv2 = mdp.advantage(a2, v)?;
    let r1 = mdp.action(a1).reward;
    let r2 = mdp.action(a2).reward;
    let lhs = ((adv1 - adv2) - (r1 - r2)).abs();
    let same_state = mdp.action(a1).state == mdp.action(a2).state;
    let g = mdp.gamma();
    let sp = span(v);
    let bound = if same_state { g * sp } else { (1.0 + g) * sp };
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    Ok(AdvSpanReport {
        lhs,
        bound,
        same_state,
        holds: lhs <= bound + 1e-12 * scale,
    })
}

/// Geometric mean of `span(V_{t+1}) / span(V_t)` after `burn_in` updates.
///
/// Meaningful on traces of normalized models, where `V_t` is the error
/// vector. Iterations after the span first drops to [`SPAN_FLOOR`] are
/// ignored.
pub fn empirical_rate(trace: &RunTrace, burn_in: usize) -> Result<f64, AnalysisError> {
    let spans: Vec<f64> = trace.records.iter().map(|r| r.span_v).collect();
    let needed = burn_in + 3;
    if spans.len() < needed + 1 {
        return Err(AnalysisError::TraceTooShort {
            needed,
            have: trace.iterations(),
        });
    }
    let usable = spans[burn_in..].iter().take_while(|&&s| s > SPAN_FLOOR).count();
    if usable < 3 {
        return Err(AnalysisError::SpanUnderflow);
    }
    let first = spans[burn_in];
    let last = spans[burn_in + usable - 1];
    Ok((last / first).powf(1.0 / (usable - 1) as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    /// State updates where the greedy action differs from the optimal one.
    pub checked: usize,
    /// Of those, updates where both mixed terms coincide.
    pub skipped: usize,
    pub violations: usize,
    /// Smallest `d - delta / (gamma span(e_t))` seen.
    pub min_slack: f64,
}

/// Recovers the per-state weight `d` in
/// `e_{t+1}(s) = gamma [d (P* e_t)(s) + (1 - d)(P_t e_t)(s)]` for each
/// standard update of `trace` and compares it with `delta / (gamma span(e_t))`.
pub fn check_mixing_bound(mdp: &Mdp, trace: &RunTrace) -> Result<MixingReport, AnalysisError> {
    if trace.alpha != 1.0 {
        return Err(AnalysisError::Assumption("mixing bound applies to alpha = 1 traces".into()));
    }
    let exact = solve_exact(mdp)?;
    if !(exact.delta > crate::mdp::ADV_TOL) {
        return Err(AnalysisError::Assumption("optimal policy is not unique".into()));
    }
    let g = mdp.gamma();
    let mut rep = MixingReport {
        checked: 0,
        skipped: 0,
        violations: 0,
        min_slack: f64::INFINITY,
    };
    for w in trace.records.windows(2) {
        mdp.check_dims(&w[0].values)?;
        let e = w[0].values.sub(&exact.values);
        let e_next = w[1].values.sub(&exact.values);
        let sp = e.span();
        for s in 0..mdp.n_states() {
            let a_t = w[0].policy.choice[s];
            let a_star = exact.policy.choice[s];
            if a_t == a_star {
                continue;
            }
            rep.checked += 1;
            let x = mdp.action(a_star).probs.iter().zip(e.iter()).map(|(p, v)| p * v).sum::<f64>();
            let y = mdp.action(a_t).probs.iter().zip(e.iter()).map(|(p, v)| p * v).sum::<f64>();
            if (y - x).abs() <= 1e-12 * (1.0 + sp) {
                rep.skipped += 1;
                continue;
            }
            let d = (y - e_next[s] / g) / (y - x);
            let slack = d - exact.delta / (g * sp);
            rep.min_slack = rep.min_slack.min(slack);
            if slack < -1e-9 {
                rep.violations += 1;
            }
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    /// State updates inspected.
    pub checked: usize,
    /// Updates with `e_{t+1}(s) > gamma (P_t e_t)(s) + tol`.
    pub violations: usize,
    /// Updates on an optimal action where equality fails.
    pub equality_violations: usize,
    /// Largest `e_{t+1}(s) - gamma (P_t e_t)(s)`.
    pub max_excess: f64,
}

/// Checks `e_{t+1}(s) <= gamma (P_t e_t)(s)` on a standard trace, with
/// equality where the greedy action is optimal. `P_t` is the greedy policy
/// recorded at step `t`.
pub fn check_error_recursion(mdp: &Mdp, trace: &RunTrace, tol: f64) -> Result<RecursionReport, AnalysisError> {
    if trace.alpha != 1.0 {
        return Err(AnalysisError::Assumption("error recursion applies to alpha = 1 traces".into()));
    }
    let exact = solve_exact(mdp)?;
    let g = mdp.gamma();
    let mut rep = RecursionReport {
        checked: 0,
        violations: 0,
        equality_violations: 0,
        max_excess: f64::NEG_INFINITY,
    };
    for w in trace.records.windows(2) {
        mdp.check_dims(&w[0].values)?;
        let e = w[0].values.sub(&exact.values);
        let e_next = w[1].values.sub(&exact.values);
        for s in 0..mdp.n_states() {
            let a = w[0].policy.choice[s];
            let pe = mdp.action(a).probs.iter().zip(e.iter()).map(|(p, x)| p * x).sum::<f64>();
            let excess = e_next[s] - g * pe;
            rep.checked += 1;
            rep.max_excess = rep.max_excess.max(excess);
            if excess > tol {
                rep.violations += 1;
            }
            if exact.policy.contains(a) && excess.abs() > tol {
                rep.equality_violations += 1;
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::*;
    use crate::mdp::{Action, ValueVector};
    use crate::solvers::{value_iteration, Stop, ViConfig};
    use crate::transforms::normalize;

    #[test]
    fn adv_span_trivial_cases() {
        let m = m2_mix();
        let r = check_adv_span_bound(&m, ActionId(0), ActionId(3), &[4.0, 4.0]).unwrap();
        assert!(r.lhs.abs() < 1e-12 && r.holds && !r.same_state);
        let r = check_adv_span_bound(&m, ActionId(1), ActionId(1), &[1.0, 7.0]).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn adv_span_tight_same_state() {
        // Coefficient mass moved from the argmin to the argmax of v.
        let m = Mdp::new(
            2,
            0.5,
            vec![
                Action::new("hi", 0, vec![1.0, 0.0], 0.0),
                Action::new("lo", 0, vec![0.0, 1.0], 0.0),
                Action::new("c", 1, vec![0.0, 1.0], 0.0),
            ],
        )
        .unwrap();
        let r = check_adv_span_bound(&m, ActionId(0), ActionId(1), &[3.0, 1.0]).unwrap();
        assert!(r.same_state);
        assert!((r.lhs - r.bound).abs() < 1e-12);
    }

    #[test]
    fn rate_below_gamma_on_m2_mix() {
        let norm = normalize(&m2_mix()).unwrap();
        let cfg = ViConfig::standard(Stop::Time(40)).with_v0_values(ValueVector::new(vec![1.0, -1.0]));
        let tr = value_iteration(&norm.mdp, &cfg).unwrap();
        let rate = empirical_rate(&tr, 0).unwrap();
        assert!(rate < 0.9, "rate {rate}");
    }

    #[test]
    fn rate_equals_gamma_on_swap() {
        let m = Mdp::new(
            2,
            0.9,
            vec![Action::new("a", 0, vec![0.0, 1.0], 1.0), Action::new("b", 1, vec![1.0, 0.0], 0.0)],
        )
        .unwrap();
        let norm = normalize(&m).unwrap();
        let cfg = ViConfig::standard(Stop::Time(60)).with_v0_values(ValueVector::new(vec![1.0, 0.0]));
        let tr = value_iteration(&norm.mdp, &cfg).unwrap();
        let rate = empirical_rate(&tr, DEFAULT_BURN_IN).unwrap();
        assert!((rate - 0.9).abs() < 1e-6, "rate {rate}");
    }

    #[test]
    fn rate_errors() {
        let m = m2_mix();
        let norm = normalize(&m).unwrap();
        let tr = value_iteration(&norm.mdp, &ViConfig::standard(Stop::Time(20))).unwrap();
        assert_eq!(empirical_rate(&tr, 0), Err(AnalysisError::SpanUnderflow));
        let short = value_iteration(&m, &ViConfig::standard(Stop::Time(3))).unwrap();
        assert!(matches!(empirical_rate(&short, 5), Err(AnalysisError::TraceTooShort { .. })));
    }

    #[test]
    fn error_recursion_on_m2_mix() {
        let m = m2_mix();
        let cfg = ViConfig::standard(Stop::Time(50)).with_v0_values(ValueVector::new(vec![0.0, 30.0]));
        let tr = value_iteration(&m, &cfg).unwrap();
        let rep = check_error_recursion(&m, &tr, 1e-9).unwrap();
        assert_eq!(rep.checked, 100);
        assert_eq!((rep.violations, rep.equality_violations), (0, 0));
    }

    #[test]
    fn mixing_bound_on_m2_mix() {
        let m = m2_mix();
        let cfg = ViConfig::standard(Stop::Time(60)).with_v0_values(ValueVector::new(vec![0.0, 30.0]));
        let tr = value_iteration(&m, &cfg).unwrap();
        let rep = check_mixing_bound(&m, &tr).unwrap();
        assert_eq!(rep.violations, 0);
    }
}
