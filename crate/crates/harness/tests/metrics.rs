use milpbranch::metrics::{all_upper_bound_objective, event_gap, pd_gap, pd_integral, pd_integral_between, Clock, GapCap, MetricError};
use milpbranch_core::bnb::{BnbResult, BnbStats, BnbStatus, BoundTrace, PseudocostTable, TraceEvent};
use milpbranch_core::gen;
use proptest::prelude::*;

fn ev(nodes: usize, primal: Option<f64>, dual: f64) -> TraceEvent {
    TraceEvent { time: nodes as f64 * 0.5, nodes, primal, dual }
}

fn trace(events: Vec<TraceEvent>) -> BoundTrace {
    BoundTrace { events }
}

const CAP: GapCap = GapCap { primal: None, constant: 7.0 };

/// Sums the gap over unit cells `[t, t + 1)`; the gap in a cell is the one
/// of the last event at or before `t`, or of the first event before any.
fn unit_cell_oracle(events: &[TraceEvent], horizon: usize, cap: &GapCap) -> f64 {
    let mut total = 0.0;
    for t in 0..horizon {
        let e = events.iter().rev().find(|e| e.nodes <= t).unwrap_or(&events[0]);
        let g = match e.primal.or(cap.primal) {
            Some(p) => (p - e.dual).max(0.0),
            None => cap.constant,
        };
        total += g;
    }
    total
}

fn synthetic(seed: u64) -> (Vec<TraceEvent>, usize) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..12);
    let mut nodes = rng.random_range(0..4usize);
    let mut dual = -(rng.random_range(0..40) as f64) * 0.5;
    let mut primal: Option<f64> = None;
    let mut out = Vec::new();
    for _ in 0..k {
        if rng.random_bool(0.5) {
            dual += rng.random_range(0..6) as f64 * 0.25;
        }
        if rng.random_bool(0.4) {
            let p = dual + rng.random_range(0..30) as f64 * 0.5;
            primal = Some(primal.map_or(p, |q: f64| q.min(p)).max(dual));
        }
        out.push(ev(nodes, primal, dual));
        nodes += rng.random_range(1..9);
    }
    let horizon = out.last().unwrap().nodes + rng.random_range(0..10);
    (out, horizon)
}

#[test]
fn constant_gap_rectangle() {
    let t = trace(vec![ev(0, Some(2.0), 0.0)]);
    assert_eq!(pd_integral(&t, 10.0, Clock::Nodes, &CAP).unwrap(), 20.0);
}

#[test]
fn two_rectangles() {
    let t = trace(vec![ev(0, Some(4.0), 0.0), ev(5, Some(4.0), 4.0)]);
    assert_eq!(pd_integral(&t, 10.0, Clock::Nodes, &CAP).unwrap(), 20.0);
}

#[test]
fn pre_incumbent_gap_uses_cap() {
    let t = trace(vec![ev(0, None, 1.0), ev(4, Some(3.0), 1.0)]);
    assert_eq!(pd_integral(&t, 6.0, Clock::Nodes, &CAP).unwrap(), 4.0 * 7.0 + 2.0 * 2.0);
    let heuristic = GapCap { primal: Some(5.0), constant: 7.0 };
    assert_eq!(pd_integral(&t, 6.0, Clock::Nodes, &heuristic).unwrap(), 4.0 * 4.0 + 2.0 * 2.0);
}

#[test]
fn wall_clock_uses_time_stamps() {
    let t = trace(vec![ev(0, Some(2.0), 0.0), ev(4, Some(1.0), 0.0)]);
    // time stamps are 0 and 2
    assert_eq!(pd_integral(&t, 3.0, Clock::Wall, &CAP).unwrap(), 2.0 * 2.0 + 1.0);
}

#[test]
fn step_sum_oracle_on_100_traces() {
    for seed in 0..100 {
        let (events, horizon) = synthetic(seed);
        let t = trace(events.clone());
        let got = pd_integral(&t, horizon as f64, Clock::Nodes, &CAP).unwrap();
        assert_eq!(got, unit_cell_oracle(&events, horizon, &CAP), "seed {seed}");
    }
}

#[test]
fn errors() {
    assert_eq!(pd_integral(&BoundTrace::default(), 1.0, Clock::Nodes, &CAP), Err(MetricError::EmptyTrace));
    let t = trace(vec![ev(0, Some(1.0), 0.0), ev(8, Some(1.0), 1.0)]);
    assert!(matches!(pd_integral(&t, 3.0, Clock::Nodes, &CAP), Err(MetricError::HorizonTooShort { .. })));
    assert!(matches!(pd_integral_between(&t, 3.0, 1.0, Clock::Nodes, &CAP), Err(MetricError::ReversedInterval(..))));
}

#[test]
fn negative_or_infinite_gaps_are_handled() {
    assert_eq!(event_gap(&ev(0, Some(1.0), 2.0), &CAP), 0.0);
    assert_eq!(event_gap(&ev(0, Some(1.0), f64::NEG_INFINITY), &CAP), 7.0);
}

proptest! {
    #[test]
    fn integral_is_additive(seed in 0u64..10_000, cut in 0.0f64..1.0) {
        let (events, horizon) = synthetic(seed);
        let t = trace(events);
        let h = horizon as f64;
        let mid = cut * h;
        let whole = pd_integral_between(&t, 0.0, h, Clock::Nodes, &CAP).unwrap();
        let parts = pd_integral_between(&t, 0.0, mid, Clock::Nodes, &CAP).unwrap()
            + pd_integral_between(&t, mid, h, Clock::Nodes, &CAP).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-9 * whole.abs().max(1.0));
    }
}

fn result(status: BnbStatus, objective: Option<f64>, dual: f64) -> BnbResult {
    BnbResult {
        status,
        objective,
        solution: None,
        dual_bound: dual,
        root_lp_objective: dual,
        nodes: 1,
        branchings: 0,
        wall_time: 0.0,
        trace: BoundTrace::default(),
        stats: BnbStats::default(),
        pseudocosts: PseudocostTable::new(0),
    }
}

#[test]
fn gap_formula_and_conventions() {
    assert_eq!(pd_gap(&result(BnbStatus::Optimal, Some(3.0), 3.0)), 0.0);
    assert_eq!(pd_gap(&result(BnbStatus::Infeasible, None, f64::INFINITY)), 0.0);
    assert!((pd_gap(&result(BnbStatus::Feasible, Some(110.0), 100.0)) - 10.0 / 110.0).abs() < 1e-15);
    assert_eq!(pd_gap(&result(BnbStatus::NoSolution, None, 100.0)), 1.0);
    assert_eq!(pd_gap(&result(BnbStatus::Feasible, Some(0.5), 0.0)), 0.5);
}

#[test]
fn all_ones_is_feasible_for_set_covering() {
    let inst = gen::gen_set_covering(10, 20, 0.3, 1).unwrap();
    let total: f64 = inst.objective.iter().sum();
    assert_eq!(all_upper_bound_objective(&inst), Some(total));
}
