use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::mdp::{ActionId, Policy, ValueVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TimeLimit,
    SpanDelta,
    ValueSpan,
    ActionCount,
    PolicyStable,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::TimeLimit => "time",
            StopReason::SpanDelta => "span",
            StopReason::ValueSpan => "value_span",
            StopReason::ActionCount => "actions",
            StopReason::PolicyStable => "policy_stable",
        }
    }
}

/// State of a run after `t` iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub t: usize,
    pub values: ValueVector,
    pub span_v: f64,
    /// `span(V_t - V_{t-1})`; absent for the initial record.
    pub span_dv: Option<f64>,
    /// Greedy policy at `values` over the active actions (value iteration)
    /// or the evaluated policy (policy iteration).
    pub policy: Policy,
    pub active: usize,
    /// Actions removed by filtering right after this record's update.
    pub filtered: Vec<ActionId>,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub gamma: f64,
    pub alpha: f64,
    pub records: Vec<IterRecord>,
    pub final_policy: Policy,
    /// `None` while the run has not stopped (e.g. cap abort).
    pub stop: Option<StopReason>,
}

impl RunTrace {
    /// Number of updates performed (records minus the initial one).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn values(&self) -> impl Iterator<Item = &ValueVector> {
        self.records.iter().map(|r| &r.values)
    }

    pub fn last(&self) -> &IterRecord {
        self.records.last().expect("trace has an initial record")
    }
}
