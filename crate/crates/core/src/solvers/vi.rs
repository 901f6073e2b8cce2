use std::time::Instant;

use crate::bellman::greedy_at;
use crate::error::SolverError;
use crate::mdp::{span, ActionSet, Mdp, Policy, StateId, ValueVector};

use super::filter::filter_appendix;
use super::trace::{IterRecord, RunTrace, StopReason};

#[derive(Clone, Debug, PartialEq)]
pub enum Stop {
    /// Stop once `t = T_max`.
    Time(usize),
    /// `span(V_t - V_{t-1}) <= eps (1 - gamma) / gamma`.
    SpanDelta(f64),
    /// `span(V_t) < eps (1 - gamma) / (gamma (1 + gamma))`; meaningful on
    /// normalized models.
    ValueSpan(f64),
    /// Stop once one action per state survives filtering.
    ActionCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    None,
    Appendix,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    Sync,
    /// `k` states per iteration, cycling in index order.
    RoundRobin(usize),
    /// Iteration `t` updates `sets[t % sets.len()]`.
    Explicit(Vec<Vec<StateId>>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialValues {
    Zeros,
    /// `1 / (1 - gamma)` everywhere.
    UpperBound,
    Given(ValueVector),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViConfig {
    pub alpha: f64,
    pub stop: Stop,
    pub filter: Filter,
    pub schedule: Schedule,
    pub v0: InitialValues,
    /// Overrides [`iteration_cap`].
    pub max_iters: Option<usize>,
}

impl ViConfig {
    /// Synchronous, `alpha = 1`, no filtering, `V_0 = 0`.
    pub fn standard(stop: Stop) -> Self {
        Self {
            alpha: 1.0,
            stop,
            filter: Filter::None,
            schedule: Schedule::Sync,
            v0: InitialValues::Zeros,
            max_iters: None,
        }
    }

    /// Standard run with appendix filtering from the upper bound.
    pub fn filtered(stop: Stop) -> Self {
        Self {
            filter: Filter::Appendix,
            v0: InitialValues::UpperBound,
            ..Self::standard(stop)
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_v0_values(mut self, v: ValueVector) -> Self {
        self.v0 = InitialValues::Given(v);
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self, mdp: &Mdp) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Config(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        match self.stop {
            Stop::SpanDelta(eps) | Stop::ValueSpan(eps) if !(eps > 0.0) => return bad("span stop requires eps > 0"),
            Stop::ActionCount if self.filter == Filter::None => return bad("action-count stop requires a filter"),
            _ => {}
        }
        match &self.schedule {
            Schedule::RoundRobin(k) if *k == 0 || *k > mdp.n_states() => return bad("round-robin width out of range"),
            Schedule::Explicit(sets) => {
                if sets.is_empty() {
                    return bad("explicit schedule is empty");
                }
                if sets.iter().flatten().any(|&s| s >= mdp.n_states()) {
                    return bad("explicit schedule names an unknown state");
                }
            }
            _ => {}
        }
        if let InitialValues::Given(v) = &self.v0 {
            mdp.check_dims(v)?;
        }
        if self.filter == Filter::Appendix {
            if mdp.actions().iter().any(|a| !(0.0..=1.0).contains(&a.reward)) {
                return bad("appendix filter requires rewards in [0, 1]");
            }
            if self.v0 != InitialValues::UpperBound {
                return bad("appendix filter requires the upper-bound initial values");
            }
            if self.alpha != 1.0 || self.schedule != Schedule::Sync {
                return bad("appendix filter requires synchronous updates with alpha = 1");
            }
        }
        Ok(())
    }

    fn initial_values(&self, mdp: &Mdp) -> ValueVector {
        match &self.v0 {
            InitialValues::Zeros => ValueVector::zeros(mdp.n_states()),
            InitialValues::UpperBound => ValueVector::constant(mdp.n_states(), 1.0 / (1.0 - mdp.gamma())),
            InitialValues::Given(v) => v.clone(),
        }
    }
}

impl Schedule {
    fn states(&self, t: usize, n: usize) -> Vec<StateId> {
        match self {
            Schedule::Sync => (0..n).collect(),
            Schedule::RoundRobin(k) => (0..*k).map(|j| (t * k + j) % n).collect(),
            Schedule::Explicit(sets) => sets[t % sets.len()].clone(),
        }
    }

    fn sweep_len(&self, n: usize) -> usize {
        match self {
            Schedule::Sync => 1,
            Schedule::RoundRobin(k) => n.div_ceil(*k),
            Schedule::Explicit(sets) => sets.len(),
        }
    }
}

/// Hard iteration cap: ten times the iterations a contraction with factor
/// `1 - alpha (1 - gamma)` needs to shrink by machine epsilon, scaled by the
/// number of iterations in one sweep of the schedule.
pub fn iteration_cap(mdp: &Mdp, cfg: &ViConfig) -> usize {
    if let Some(cap) = cfg.max_iters {
        return cap;
    }
    let rate = 1.0 - cfg.alpha * (1.0 - mdp.gamma());
    let per = ((1.0 / f64::EPSILON).ln() / (1.0 / rate).ln()).ceil() as usize;
    10 * per * cfg.schedule.sweep_len(mdp.n_states())
}

/// Runs generalized value iteration.
///
/// Record `t` holds `V_t`, the greedy policy at `V_t` over `A_t` and the
/// active count `|A_t|`; the stop test runs on record `t` before update `t+1`.
pub fn value_iteration(mdp: &Mdp, cfg: &ViConfig) -> Result<RunTrace, SolverError> {
    cfg.validate(mdp)?;
    let n = mdp.n_states();
    let g = mdp.gamma();
    let cap = match cfg.stop {
        Stop::Time(t_max) => t_max,
        _ => iteration_cap(mdp, cfg),
    };
    let start = Instant::now();
    let mut active = ActionSet::full(mdp);
    let mut v = cfg.initial_values(mdp);
    let (mut backup, mut greedy) = backup(mdp, &v, &active)?;
    let mut trace = RunTrace {
        gamma: g,
        alpha: cfg.alpha,
        records: vec![IterRecord {
            t: 0,
            span_v: v.span(),
            values: v.clone(),
            span_dv: None,
            policy: greedy.clone(),
            active: active.len(),
            filtered: Vec::new(),
            elapsed: start.elapsed(),
        }],
        final_policy: greedy.clone(),
        stop: None,
    };
    let mut t = 0;
    loop {
        if let Some(reason) = stop_reason(&cfg.stop, g, n, trace.last()) {
            trace.stop = Some(reason);
            trace.final_policy = greedy;
            return Ok(trace);
        }
        if t >= cap {
            trace.final_policy = greedy;
            return Err(SolverError::IterationCap {
                cap,
                trace: Box::new(trace),
            });
        }
        let mut next = v.clone().into_inner();
        for s in cfg.schedule.states(t, n) {
            next[s] = if cfg.alpha == 1.0 {
                backup[s]
            } else {
                (1.0 - cfg.alpha) * v[s] + cfg.alpha * backup[s]
            };
        }
        let next = ValueVector::new(next);
        t += 1;
        let mut filtered = Vec::new();
        if cfg.filter == Filter::Appendix {
            let kept = filter_appendix(mdp, t, &next, &active);
            filtered = active.iter().filter(|&a| !kept.contains(a)).collect();
            active = kept;
        }
        (backup, greedy) = self::backup(mdp, &next, &active)?;
        let span_dv = next.sub(&v).span();
        v = next;
        if let Some(prev) = trace.records.last_mut() {
            prev.filtered = filtered;
        }
        trace.records.push(IterRecord {
            t,
            span_v: v.span(),
            values: v.clone(),
            span_dv: Some(span_dv),
            policy: greedy.clone(),
            active: active.len(),
            filtered: Vec::new(),
            elapsed: start.elapsed(),
        });
    }
}

fn backup(mdp: &Mdp, v: &[f64], active: &ActionSet) -> Result<(Vec<f64>, Policy), SolverError> {
    let mut values = Vec::with_capacity(mdp.n_states());
    let mut choice = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        let (q, a) = greedy_at(mdp, v, active.at_state(mdp, s)).ok_or(crate::error::MdpError::NoActiveAction(s))?;
        values.push(q);
        choice.push(a);
    }
    Ok((values, Policy::new(choice)))
}

fn stop_reason(stop: &Stop, g: f64, n: usize, rec: &IterRecord) -> Option<StopReason> {
    match *stop {
        Stop::Time(t_max) => (rec.t >= t_max).then_some(StopReason::TimeLimit),
        Stop::SpanDelta(eps) => rec
            .span_dv
            .filter(|&d| d <= eps * (1.0 - g) / g)
            .map(|_| StopReason::SpanDelta),
        Stop::ValueSpan(eps) => (span(rec.values.as_slice()) < eps * (1.0 - g) / (g * (1.0 + g))).then_some(StopReason::ValueSpan),
        Stop::ActionCount => (rec.active == n).then_some(StopReason::ActionCount),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::*;
    use crate::mdp::{Action, ActionId};
    use crate::solvers::solve_exact;

    #[test]
    fn first_backup_of_m2_mix() {
        let m = m2_mix();
        let tr = value_iteration(&m, &ViConfig::standard(Stop::Time(1))).unwrap();
        assert_eq!(tr.records[1].values.as_slice(), &[1.0, 0.8]);
        assert_eq!(tr.stop, Some(StopReason::TimeLimit));
    }

    #[test]
    fn time_zero_keeps_only_initial_record() {
        let tr = value_iteration(&m2_mix(), &ViConfig::standard(Stop::Time(0))).unwrap();
        assert_eq!(tr.records.len(), 1);
    }

    #[test]
    fn start_at_optimum_stops_after_one_step() {
        let m = m2_mix();
        let opt = solve_exact(&m).unwrap();
        let cfg = ViConfig::standard(Stop::SpanDelta(1e-12)).with_v0_values(opt.values.clone());
        let tr = value_iteration(&m, &cfg).unwrap();
        assert_eq!(tr.iterations(), 1);
        assert!(tr.records[1].span_dv.unwrap() <= 1e-9);
        assert_eq!(tr.final_policy.choice, opt.policy.choice);
    }

    #[test]
    fn span_stop_finds_m2_mix_optimum() {
        let m = m2_mix();
        let tr = value_iteration(&m, &ViConfig::standard(Stop::SpanDelta(1e-6))).unwrap();
        assert_eq!(tr.stop, Some(StopReason::SpanDelta));
        assert_eq!(tr.final_policy.choice, vec![ActionId(0), ActionId(2)]);
    }

    #[test]
    fn config_errors() {
        let m = m2_mix();
        let cfg = ViConfig::standard(Stop::ActionCount);
        assert!(matches!(value_iteration(&m, &cfg), Err(SolverError::Config(_))));
        let cfg = ViConfig::standard(Stop::SpanDelta(0.0));
        assert!(matches!(value_iteration(&m, &cfg), Err(SolverError::Config(_))));
        let cfg = ViConfig::standard(Stop::Time(3)).with_alpha(1.5);
        assert!(matches!(value_iteration(&m, &cfg), Err(SolverError::Config(_))));
        let cfg = ViConfig::filtered(Stop::ActionCount).with_alpha(0.5);
        assert!(matches!(value_iteration(&m, &cfg), Err(SolverError::Config(_))));
        let cfg = ViConfig::standard(Stop::Time(3)).with_schedule(Schedule::RoundRobin(3));
        assert!(matches!(value_iteration(&m, &cfg), Err(SolverError::Config(_))));
    }

    #[test]
    fn unmet_stop_hits_the_cap() {
        // span(V*) = 0.2 never falls below the value-span threshold.
        let m = m2_mix();
        let cfg = ViConfig::standard(Stop::ValueSpan(1e-6)).with_v0_values(ValueVector::new(vec![0.0, 5.0]));
        match value_iteration(&m, &cfg) {
            Err(SolverError::IterationCap { cap, trace }) => {
                assert_eq!(trace.iterations(), cap);
                assert!(trace.stop.is_none());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_robin_and_learning_rate_converge() {
        let m = m2_mix();
        let cfg = ViConfig::standard(Stop::SpanDelta(1e-8))
            .with_schedule(Schedule::RoundRobin(1))
            .with_alpha(0.5);
        let tr = value_iteration(&m, &cfg).unwrap();
        assert_eq!(tr.final_policy.choice, vec![ActionId(0), ActionId(2)]);
        let v = tr.last().values.clone();
        assert!((v[0] - 9.1).abs() < 1e-3);
    }

    #[test]
    fn filtered_run_ends_with_optimal_actions() {
        let m = Mdp::new(
            2,
            0.8,
            vec![
                Action::new("a1", 0, vec![0.5, 0.5], 1.0),
                Action::new("a2", 0, vec![1.0, 0.0], 0.2),
                Action::new("b1", 1, vec![0.5, 0.5], 0.8),
                Action::new("b2", 1, vec![0.0, 1.0], 0.0),
            ],
        )
        .unwrap();
        let tr = value_iteration(&m, &ViConfig::filtered(Stop::ActionCount)).unwrap();
        assert_eq!(tr.stop, Some(StopReason::ActionCount));
        assert_eq!(tr.final_policy.choice, solve_exact(&m).unwrap().policy.choice);
        let counts: Vec<usize> = tr.records.iter().map(|r| r.active).collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]));
        let removed: usize = tr.records.iter().map(|r| r.filtered.len()).sum();
        assert_eq!(removed, 2);
    }
}
