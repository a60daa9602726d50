//! Branch-and-bound with pluggable branching and a primal/dual bound trace.
//!
//! Children are evaluated eagerly: when a node is branched both child LPs
//! are solved (or taken from the strong-branching cache) before they enter
//! the open set. `nodes` therefore counts every LP-evaluated node, i.e.
//! `1 + 2 * branchings`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, AgeCounters, BranchSample, IncumbentState, StaticFeatures};
use crate::lp::{Basis, LpError, LpOptions, LpResult, LpSolver, LpStatus};
use crate::model::MilpInstance;

pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("LP failure: {0}")]
    Lp(#[from] LpError),
    #[error("LP iteration limit reached at a node")]
    LpIterationLimit,
    #[error("LP relaxation is unbounded")]
    Unbounded,
    #[error("policy chose variable {0}, which is not a branching candidate")]
    InvalidBranch(usize),
    #[error("branching policy failed: {0}")]
    Policy(String),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("no fractional integer variable: the LP solution is integral")]
pub struct EmptyCandidates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSelection {
    Dfs,
    BestBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbConfig {
    pub node_limit: Option<usize>,
    /// Seconds; checked between nodes.
    pub time_limit: Option<f64>,
    pub node_selection: NodeSelection,
    pub gap_tol: f64,
    pub prune: bool,
    /// Clamp inside the strong-branching product score.
    pub sb_epsilon: f64,
    pub lp: LpOptions,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            node_limit: None,
            time_limit: None,
            node_selection: NodeSelection::Dfs,
            gap_tol: 1e-6,
            prune: true,
            sb_epsilon: 1e-6,
            lp: LpOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub depth: usize,
    /// LP objective of the parent (the node's own for the root).
    pub parent_objective: f64,
    pub lp: LpResult,
    seq: u64,
}

impl Node {
    pub fn objective(&self) -> f64 {
        self.lp.objective
    }
}

/// Fractional integer variables of an LP solution, ascending.
pub fn candidates(inst: &MilpInstance, x: &[f64]) -> Result<Vec<usize>, EmptyCandidates> {
    let c: Vec<usize> = (0..inst.num_vars())
        .filter(|&j| inst.integrality[j] && (x[j] - x[j].round()).abs() > INT_TOL)
        .collect();
    if c.is_empty() {
        Err(EmptyCandidates)
    } else {
        Ok(c)
    }
}

/// LP solution with integer variables snapped to the nearest integer, and
/// its objective; falls back to the raw LP point if snapping breaks a row.
fn integral_point(inst: &MilpInstance, lp: &LpResult) -> (f64, Vec<f64>) {
    let x: Vec<f64> = lp
        .primal
        .iter()
        .zip(&inst.integrality)
        .map(|(&v, &int)| if int { v.round() } else { v })
        .collect();
    if inst.is_feasible(&x, 1e-6) {
        (inst.objective_value(&x), x)
    } else {
        (lp.objective, lp.primal.clone())
    }
}

fn lowered(v: f64) -> f64 {
    v - 1e-9 * (1.0 + v.abs())
}

/// Gain assigned to an infeasible strong-branching child.
pub fn infeasible_gain(parent_objective: f64) -> f64 {
    1e6 * parent_objective.abs().max(1.0)
}

/// `max(down - p0, eps) * max(up - p0, eps)`; infeasible children (objective
/// `+inf`) count as `infeasible_gain(p0)`.
pub fn sb_score(p0: f64, down: f64, up: f64, eps: f64) -> f64 {
    let gain = |p: f64| if p.is_finite() { p - p0 } else { infeasible_gain(p0) };
    gain(down).max(eps) * gain(up).max(eps)
}

/// Index of the first maximum.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudocostTable {
    down_sum: Vec<f64>,
    up_sum: Vec<f64>,
    pub down_count: Vec<u32>,
    pub up_count: Vec<u32>,
}

impl PseudocostTable {
    pub fn new(n: usize) -> Self {
        PseudocostTable { down_sum: vec![0.0; n], up_sum: vec![0.0; n], down_count: vec![0; n], up_count: vec![0; n] }
    }

    pub fn psi_down(&self, j: usize) -> Option<f64> {
        (self.down_count[j] > 0).then(|| self.down_sum[j] / f64::from(self.down_count[j]))
    }

    pub fn psi_up(&self, j: usize) -> Option<f64> {
        (self.up_count[j] > 0).then(|| self.up_sum[j] / f64::from(self.up_count[j]))
    }

    /// Sets both means directly (one observation each); used by tests and warm starts.
    pub fn set(&mut self, j: usize, psi_down: f64, psi_up: f64) {
        self.down_sum[j] = psi_down;
        self.up_sum[j] = psi_up;
        self.down_count[j] = 1;
        self.up_count[j] = 1;
    }

    pub fn reliability(&self, j: usize) -> u32 {
        self.down_count[j].min(self.up_count[j])
    }

    /// Records the objective gains of both children of a branching on `j` at
    /// LP value `x`. Infeasible children are not recorded.
    pub fn observe(&mut self, j: usize, x: f64, p0: f64, down: f64, up: f64) {
        let f_down = x - x.floor();
        let f_up = x.ceil() - x;
        if down.is_finite() && f_down > 0.0 {
            self.down_sum[j] += (down - p0).max(0.0) / f_down;
            self.down_count[j] += 1;
        }
        if up.is_finite() && f_up > 0.0 {
            self.up_sum[j] += (up - p0).max(0.0) / f_up;
            self.up_count[j] += 1;
        }
    }

    fn mean_or_one(sum: &[f64], count: &[u32]) -> f64 {
        let (mut s, mut k) = (0.0, 0u32);
        for (v, c) in sum.iter().zip(count) {
            if *c > 0 {
                s += v / f64::from(*c);
                k += 1;
            }
        }
        if k == 0 {
            1.0
        } else {
            s / f64::from(k)
        }
    }

    /// `max(psi_down * f_down, eps) * max(psi_up * f_up, eps)`. Variables
    /// without history use the mean over initialized variables (1 if none).
    pub fn score(&self, j: usize, x: f64, eps: f64) -> f64 {
        let pd = self.psi_down(j).unwrap_or_else(|| Self::mean_or_one(&self.down_sum, &self.down_count));
        let pu = self.psi_up(j).unwrap_or_else(|| Self::mean_or_one(&self.up_sum, &self.up_count));
        (pd * (x - x.floor())).max(eps) * (pu * (x.ceil() - x)).max(eps)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BnbStats {
    pub lp_solves: usize,
    pub sb_lp_solves: usize,
    pub lp_iterations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    pub nodes: usize,
    /// `None` before the first incumbent.
    pub primal: Option<f64>,
    pub dual: f64,
}

/// Primal/dual bound history, recorded at every bound change.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundTrace {
    pub events: Vec<TraceEvent>,
}

impl BoundTrace {
    fn record(&mut self, ev: TraceEvent) {
        if let Some(last) = self.events.last() {
            if last.primal == ev.primal && last.dual == ev.dual {
                return;
            }
        }
        self.events.push(ev);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnbStatus {
    Optimal,
    /// Limit reached with an incumbent.
    Feasible,
    Infeasible,
    /// Limit reached before any incumbent was found.
    NoSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbResult {
    pub status: BnbStatus,
    pub objective: Option<f64>,
    pub solution: Option<Vec<f64>>,
    pub dual_bound: f64,
    pub root_lp_objective: f64,
    pub nodes: usize,
    pub branchings: usize,
    pub wall_time: f64,
    pub trace: BoundTrace,
    pub stats: BnbStats,
    pub pseudocosts: PseudocostTable,
}

/// Both child LPs of one candidate.
#[derive(Debug, Clone)]
pub struct ChildPair {
    pub down: LpResult,
    pub up: LpResult,
}

/// What a branching policy sees at a node.
pub struct BranchContext<'a, 'i> {
    solver: &'a LpSolver<'i>,
    config: &'a BnbConfig,
    node: &'a Node,
    candidates: &'a [usize],
    pseudocosts: &'a mut PseudocostTable,
    stats: &'a mut BnbStats,
    ages: &'a mut AgeCounters,
    statics: &'a StaticFeatures,
    incumbent: &'a IncumbentState,
    has_incumbent: bool,
    cache: HashMap<usize, ChildPair>,
}

impl<'a, 'i> BranchContext<'a, 'i> {
    pub fn instance(&self) -> &MilpInstance {
        self.solver.instance()
    }

    pub fn node(&self) -> &Node {
        self.node
    }

    pub fn candidates(&self) -> &[usize] {
        self.candidates
    }

    pub fn config(&self) -> &BnbConfig {
        self.config
    }

    pub fn pseudocosts(&self) -> &PseudocostTable {
        self.pseudocosts
    }

    pub fn stats(&self) -> &BnbStats {
        self.stats
    }

    pub fn has_incumbent(&self) -> bool {
        self.has_incumbent
    }

    /// Feature view of the node for learned policies.
    pub fn sample(&self) -> BranchSample {
        features::extract(
            self.instance(),
            self.statics,
            &self.node.lower,
            &self.node.upper,
            &self.node.lp,
            self.candidates,
            self.incumbent,
            self.ages,
            self.node.depth,
            self.node.parent_objective,
        )
    }

    /// Strong-branching score of candidate `var`. Solves both children once;
    /// the results are cached for child creation and recorded in the
    /// pseudocost table.
    pub fn strong_branch(&mut self, var: usize) -> Result<f64, SolveError> {
        let p0 = self.node.objective();
        if !self.cache.contains_key(&var) {
            let x = self.node.lp.primal[var];
            let mut pair = solve_children(self.solver, self.node, var, self.stats, self.ages)?;
            pair.down.basis.drop_factor();
            pair.up.basis.drop_factor();
            self.stats.sb_lp_solves += 2;
            self.pseudocosts.observe(var, x, p0, child_bound(&pair.down), child_bound(&pair.up));
            self.cache.insert(var, pair);
        }
        let pair = &self.cache[&var];
        Ok(sb_score(p0, child_bound(&pair.down), child_bound(&pair.up), self.config.sb_epsilon))
    }

    /// Pseudocost score of candidate `var` from the current table.
    pub fn pseudocost_score(&self, var: usize) -> f64 {
        self.pseudocosts.score(var, self.node.lp.primal[var], self.config.sb_epsilon)
    }
}

fn child_bound(lp: &LpResult) -> f64 {
    match lp.status {
        LpStatus::Infeasible => f64::INFINITY,
        _ => lp.objective,
    }
}

fn solve_checked(
    solver: &LpSolver<'_>,
    lower: &[f64],
    upper: &[f64],
    warm: Option<&Basis>,
    stats: &mut BnbStats,
    ages: &mut AgeCounters,
) -> Result<LpResult, SolveError> {
    let mut r = solver.solve(lower, upper, warm)?;
    stats.lp_solves += 1;
    stats.lp_iterations += r.iterations as u64;
    ages.total_iterations += r.iterations as u64;
    if r.status == LpStatus::IterationLimit && warm.is_some() {
        r = solver.solve(lower, upper, None)?;
        stats.lp_solves += 1;
        stats.lp_iterations += r.iterations as u64;
        ages.total_iterations += r.iterations as u64;
    }
    match r.status {
        LpStatus::IterationLimit => Err(SolveError::LpIterationLimit),
        LpStatus::Unbounded => Err(SolveError::Unbounded),
        _ => Ok(r),
    }
}

fn solve_children(
    solver: &LpSolver<'_>,
    node: &Node,
    var: usize,
    stats: &mut BnbStats,
    ages: &mut AgeCounters,
) -> Result<ChildPair, SolveError> {
    let x = node.lp.primal[var];
    let mut up_d = node.upper.clone();
    up_d[var] = x.floor();
    let down = solve_checked(solver, &node.lower, &up_d, Some(&node.lp.basis), stats, ages)?;
    let mut lo_u = node.lower.clone();
    lo_u[var] = x.ceil();
    let up = solve_checked(solver, &lo_u, &node.upper, Some(&node.lp.basis), stats, ages)?;
    Ok(ChildPair { down, up })
}

pub trait BranchingPolicy {
    /// Returns the variable to branch on; must be one of `ctx.candidates()`.
    fn select(&mut self, ctx: &mut BranchContext<'_, '_>) -> Result<usize, SolveError>;
}

impl<P: BranchingPolicy + ?Sized> BranchingPolicy for &mut P {
    fn select(&mut self, ctx: &mut BranchContext<'_, '_>) -> Result<usize, SolveError> {
        (**self).select(ctx)
    }
}

impl<P: BranchingPolicy + ?Sized> BranchingPolicy for Box<P> {
    fn select(&mut self, ctx: &mut BranchContext<'_, '_>) -> Result<usize, SolveError> {
        (**self).select(ctx)
    }
}

/// Uniformly random candidate.
pub struct RandomBranching {
    rng: ChaCha8Rng,
}

impl RandomBranching {
    pub fn new(seed: u64) -> Self {
        RandomBranching { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl BranchingPolicy for RandomBranching {
    fn select(&mut self, ctx: &mut BranchContext<'_, '_>) -> Result<usize, SolveError> {
        let c = ctx.candidates();
        Ok(c[self.rng.random_range(0..c.len())])
    }
}

/// One expert decision: the sample, candidate ids, chosen variable and the
/// strong-branching score of every candidate (same order as `candidates`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRecord {
    pub sample: BranchSample,
    pub candidates: Vec<usize>,
    pub action: usize,
    pub scores: Vec<f64>,
}

/// Full strong branching, optionally recording a Bernoulli-thinned stream of
/// expert decisions.
#[derive(Default)]
pub struct StrongBranching {
    recorder: Option<(f64, ChaCha8Rng)>,
    pub records: Vec<ExpertRecord>,
}

impl StrongBranching {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn recording(sample_rate: f64, seed: u64) -> Self {
        StrongBranching { recorder: Some((sample_rate.clamp(0.0, 1.0), ChaCha8Rng::seed_from_u64(seed))), records: Vec::new() }
    }
}

impl BranchingPolicy for StrongBranching {
    fn select(&mut self, ctx: &mut BranchContext<'_, '_>) -> Result<usize, SolveError> {
        let cands = ctx.candidates().to_vec();
        let mut scores = Vec::with_capacity(cands.len());
        for &j in &cands {
            scores.push(ctx.strong_branch(j)?);
        }
        let best = cands[argmax_first(&scores).expect("candidates are nonempty")];
        if let Some((rate, rng)) = &mut self.recorder {
            if rng.random_bool(*rate) {
                self.records.push(ExpertRecord { sample: ctx.sample(), candidates: cands, action: best, scores });
            }
        }
        Ok(best)
    }
}

/// Pure pseudocost branching.
#[derive(Default)]
pub struct PseudocostBranching;

impl BranchingPolicy for PseudocostBranching {
    fn select(&mut self, ctx: &mut BranchContext<'_, '_>) -> Result<usize, SolveError> {
        let scores: Vec<f64> = ctx.candidates().iter().map(|&j| ctx.pseudocost_score(j)).collect();
        Ok(ctx.candidates()[argmax_first(&scores).expect("candidates are nonempty")])
    }
}

/// Reliability pseudocost branching: strong branching on candidates with
/// fewer than `eta_rel` observations in either direction, pseudocosts for
/// the rest.
pub struct ReliabilityBranching {
    pub eta_rel: u32,
}

impl Default for ReliabilityBranching {
    fn default() -> Self {
        ReliabilityBranching { eta_rel: 8 }
    }
}

impl BranchingPolicy for ReliabilityBranching {
    fn select(&mut self, ctx: &mut BranchContext<'_, '_>) -> Result<usize, SolveError> {
        let cands = ctx.candidates().to_vec();
        let unreliable: Vec<bool> = cands.iter().map(|&j| ctx.pseudocosts().reliability(j) < self.eta_rel).collect();
        let mut scores = Vec::with_capacity(cands.len());
        for (k, &j) in cands.iter().enumerate() {
            scores.push(if unreliable[k] { ctx.strong_branch(j)? } else { ctx.pseudocost_score(j) });
        }
        Ok(cands[argmax_first(&scores).expect("candidates are nonempty")])
    }
}

struct HeapNode(Node);

impl PartialEq for HeapNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapNode {}
impl PartialOrd for HeapNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapNode {
    // Max-heap: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.objective().total_cmp(&self.0.objective()).then(other.0.seq.cmp(&self.0.seq))
    }
}

enum OpenSet {
    Stack(Vec<Node>),
    Heap(BinaryHeap<HeapNode>),
}

impl OpenSet {
    fn pop(&mut self) -> Option<Node> {
        match self {
            OpenSet::Stack(s) => s.pop(),
            OpenSet::Heap(h) => h.pop().map(|n| n.0),
        }
    }

    fn push(&mut self, node: Node) {
        match self {
            OpenSet::Stack(s) => s.push(node),
            OpenSet::Heap(h) => h.push(HeapNode(node)),
        }
    }

    fn min_bound(&self) -> Option<f64> {
        match self {
            OpenSet::Stack(s) => s.iter().map(Node::objective).min_by(f64::total_cmp),
            OpenSet::Heap(h) => h.peek().map(|n| n.0.objective()),
        }
    }
}

/// Solves `inst` to optimality or until a limit is hit.
pub fn solve(
    inst: &MilpInstance,
    policy: &mut dyn BranchingPolicy,
    config: &BnbConfig,
) -> Result<BnbResult, SolveError> {
    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64();
    let solver = LpSolver::new(inst).with_options(config.lp);
    let statics = StaticFeatures::new(inst);
    let mut ages = AgeCounters::new(inst.num_vars(), inst.num_rows());
    let mut inc_state = IncumbentState::default();
    let mut pseudocosts = PseudocostTable::new(inst.num_vars());
    let mut stats = BnbStats::default();
    let mut trace = BoundTrace::default();

    let root_lp = solve_checked(&solver, &inst.lower, &inst.upper, None, &mut stats, &mut ages)?;
    let root_obj = root_lp.objective;
    let mut nodes = 1usize;
    let mut branchings = 0usize;
    let finish = |status, best: Option<(f64, Vec<f64>)>, dual, nodes, branchings, trace, stats, pseudocosts| {
        let (objective, solution) = match best {
            Some((v, x)) => (Some(v), Some(x)),
            None => (None, None),
        };
        BnbResult {
            status,
            objective,
            solution,
            dual_bound: dual,
            root_lp_objective: root_obj,
            nodes,
            branchings,
            wall_time: elapsed(),
            trace,
            stats,
            pseudocosts,
        }
    };
    if root_lp.status == LpStatus::Infeasible {
        trace.record(TraceEvent { time: elapsed(), nodes, primal: None, dual: f64::INFINITY });
        return Ok(finish(BnbStatus::Infeasible, None, f64::INFINITY, nodes, 0, trace, stats, pseudocosts));
    }
    let mut dual = lowered(root_obj);
    trace.record(TraceEvent { time: elapsed(), nodes, primal: None, dual });
    if inst.num_integer() == 0 {
        let best = Some((root_obj, root_lp.primal.clone()));
        trace.record(TraceEvent { time: elapsed(), nodes, primal: Some(root_obj), dual: root_obj });
        return Ok(finish(BnbStatus::Optimal, best, root_obj, nodes, 0, trace, stats, pseudocosts));
    }

    let mut open = match config.node_selection {
        NodeSelection::Dfs => OpenSet::Stack(Vec::new()),
        NodeSelection::BestBound => OpenSet::Heap(BinaryHeap::new()),
    };
    let mut seq = 0u64;
    open.push(Node {
        lower: inst.lower.clone(),
        upper: inst.upper.clone(),
        depth: 0,
        parent_objective: root_obj,
        lp: root_lp,
        seq,
    });
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut limit_hit = false;

    while let Some(node) = open.pop() {
        if config.time_limit.is_some_and(|t| elapsed() >= t) {
            open.push(node);
            limit_hit = true;
            break;
        }
        let cutoff = best.as_ref().map(|b| b.0 - config.gap_tol);
        if config.prune && cutoff.is_some_and(|c| node.objective() >= c) {
            continue;
        }
        ages.observe(inst, &node.lp);
        match candidates(inst, &node.lp.primal) {
            Err(EmptyCandidates) => {
                let (value, x) = integral_point(inst, &node.lp);
                if best.as_ref().is_none_or(|b| value < b.0) {
                    inc_state.accept(&x);
                    best = Some((value, x));
                }
            }
            Ok(cands) => {
                if config.node_limit.is_some_and(|cap| nodes + 2 > cap) {
                    open.push(node);
                    limit_hit = true;
                    break;
                }
                let mut node = node;
                if !node.lp.basis.has_factor() {
                    node.lp.basis = solver.factorize(&node.lower, &node.upper, &node.lp.basis)?;
                }
                let mut ctx = BranchContext {
                    solver: &solver,
                    config,
                    node: &node,
                    candidates: &cands,
                    pseudocosts: &mut pseudocosts,
                    stats: &mut stats,
                    ages: &mut ages,
                    statics: &statics,
                    incumbent: &inc_state,
                    has_incumbent: best.is_some(),
                    cache: HashMap::new(),
                };
                let var = policy.select(&mut ctx)?;
                if !cands.contains(&var) {
                    return Err(SolveError::InvalidBranch(var));
                }
                let mut cache = std::mem::take(&mut ctx.cache);
                let pair = match cache.remove(&var) {
                    Some(p) => p,
                    None => {
                        let p = solve_children(&solver, &node, var, &mut stats, &mut ages)?;
                        pseudocosts.observe(var, node.lp.primal[var], node.objective(), child_bound(&p.down), child_bound(&p.up));
                        p
                    }
                };
                nodes += 2;
                branchings += 1;
                let x = node.lp.primal[var];
                let p0 = node.objective();
                let cutoff = best.as_ref().map(|b| b.0 - config.gap_tol);
                let mut children = Vec::with_capacity(2);
                for (lp, is_down) in [(pair.down, true), (pair.up, false)] {
                    if lp.status == LpStatus::Infeasible {
                        continue;
                    }
                    if config.prune && cutoff.is_some_and(|c| lp.objective >= c) {
                        continue;
                    }
                    let (mut lower, mut upper) = (node.lower.clone(), node.upper.clone());
                    if is_down {
                        upper[var] = x.floor();
                    } else {
                        lower[var] = x.ceil();
                    }
                    seq += 1;
                    children.push(Node { lower, upper, depth: node.depth + 1, parent_objective: p0, lp, seq });
                }
                // DFS pops the better child first; ties keep the down child on top.
                if children.len() == 2 && children[1].objective() > children[0].objective() {
                    children.swap(0, 1);
                }
                children.reverse();
                let last = children.len();
                for (k, mut c) in children.into_iter().enumerate() {
                    if k + 1 < last || config.node_selection == NodeSelection::BestBound {
                        c.lp.basis.drop_factor();
                    }
                    open.push(c);
                }
            }
        }
        // LP objectives carry round-off; the trace uses a slightly lowered
        // value so the dual never crosses an exactly evaluated incumbent.
        let bound = match (open.min_bound().map(lowered), &best) {
            (Some(o), Some(b)) => o.min(b.0),
            (Some(o), None) => o,
            (None, Some(b)) => b.0,
            (None, None) => dual,
        };
        dual = dual.max(bound);
        if let Some(b) = &best {
            dual = dual.min(b.0);
        }
        trace.record(TraceEvent { time: elapsed(), nodes, primal: best.as_ref().map(|b| b.0), dual });
    }

    let status = match (&best, limit_hit) {
        (Some(_), false) => BnbStatus::Optimal,
        (None, false) => BnbStatus::Infeasible,
        (Some(_), true) => BnbStatus::Feasible,
        (None, true) => BnbStatus::NoSolution,
    };
    if !limit_hit {
        dual = best.as_ref().map_or(f64::INFINITY, |b| b.0);
    }
    trace.record(TraceEvent { time: elapsed(), nodes, primal: best.as_ref().map(|b| b.0), dual });
    Ok(finish(status, best, dual, nodes, branchings, trace, stats, pseudocosts))
}

/// Runs the strong-branching expert and returns the thinned decision stream.
pub fn run_expert_collect(
    inst: &MilpInstance,
    sample_rate: f64,
    seed: u64,
    config: &BnbConfig,
) -> Result<(Vec<ExpertRecord>, BnbResult), SolveError> {
    let mut expert = StrongBranching::recording(sample_rate, seed);
    let result = solve(inst, &mut expert, config)?;
    Ok((expert.records, result))
}
