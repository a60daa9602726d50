//! Solve-quality metrics: primal-dual integral and gap.

use milpbranch_core::bnb::{BnbResult, BnbStatus, BoundTrace, TraceEvent};
use milpbranch_core::MilpInstance;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clock {
    Wall,
    /// Node counter; deterministic across runs.
    #[default]
    Nodes,
}

impl Clock {
    pub fn stamp(self, ev: &TraceEvent) -> f64 {
        match self {
            Clock::Wall => ev.time,
            Clock::Nodes => ev.nodes as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("bound trace is empty")]
    EmptyTrace,
    #[error("horizon {horizon} precedes the last trace event at {last}")]
    HorizonTooShort { horizon: f64, last: f64 },
    #[error("integration interval [{0}, {1}] is reversed")]
    ReversedInterval(f64, f64),
}

/// Gap charged while no incumbent exists: `primal - dual` against a
/// heuristic primal value when one is known, else a flat constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCap {
    pub primal: Option<f64>,
    pub constant: f64,
}

impl GapCap {
    pub fn constant(c: f64) -> Self {
        GapCap { primal: None, constant: c }
    }

    /// Uses the objective of the all-upper-bound point when it is finite and
    /// feasible.
    pub fn for_instance(inst: &MilpInstance, constant: f64) -> Self {
        GapCap { primal: all_upper_bound_objective(inst), constant }
    }
}

/// Objective of `x = u` if every upper bound is finite and the point is
/// feasible.
pub fn all_upper_bound_objective(inst: &MilpInstance) -> Option<f64> {
    if inst.upper.iter().any(|u| !u.is_finite()) {
        return None;
    }
    inst.is_feasible(&inst.upper, 1e-9).then(|| inst.objective_value(&inst.upper))
}

/// Gap held from an event until the next one. Never negative.
pub fn event_gap(ev: &TraceEvent, cap: &GapCap) -> f64 {
    let g = match (ev.primal, cap.primal) {
        (Some(p), _) => p - ev.dual,
        (None, Some(p)) => p - ev.dual,
        (None, None) => cap.constant,
    };
    if g.is_finite() {
        g.max(0.0)
    } else {
        cap.constant
    }
}

/// Integral of the piecewise-constant gap over `[a, b]`. The first event's
/// gap also covers the time before it.
pub fn pd_integral_between(trace: &BoundTrace, a: f64, b: f64, clock: Clock, cap: &GapCap) -> Result<f64, MetricError> {
    if trace.events.is_empty() {
        return Err(MetricError::EmptyTrace);
    }
    if b < a {
        return Err(MetricError::ReversedInterval(a, b));
    }
    let ev = &trace.events;
    let mut total = 0.0;
    for (k, e) in ev.iter().enumerate() {
        let lo = if k == 0 { f64::NEG_INFINITY } else { clock.stamp(e) };
        let hi = ev.get(k + 1).map_or(f64::INFINITY, |n| clock.stamp(n));
        let (l, h) = (lo.max(a), hi.min(b));
        if h > l {
            total += event_gap(e, cap) * (h - l);
        }
    }
    Ok(total)
}

/// Primal-dual integral over `[0, horizon]`.
pub fn pd_integral(trace: &BoundTrace, horizon: f64, clock: Clock, cap: &GapCap) -> Result<f64, MetricError> {
    let last = trace.events.last().ok_or(MetricError::EmptyTrace)?;
    let last = clock.stamp(last);
    if horizon < last {
        return Err(MetricError::HorizonTooShort { horizon, last });
    }
    pd_integral_between(trace, 0.0, horizon, clock, cap)
}

/// Relative primal-dual gap at termination: 0 when solved, 1 without an
/// incumbent.
pub fn pd_gap(result: &BnbResult) -> f64 {
    match result.status {
        BnbStatus::Optimal | BnbStatus::Infeasible => 0.0,
        BnbStatus::NoSolution => 1.0,
        BnbStatus::Feasible => match result.objective {
            None => 1.0,
            Some(_) if !result.dual_bound.is_finite() => 1.0,
            Some(p) => {
                let d = result.dual_bound;
                ((p - d) / p.abs().max(d.abs()).max(1.0)).clamp(0.0, 1.0)
            }
        },
    }
}
