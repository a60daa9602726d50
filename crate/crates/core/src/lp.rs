//! Bounded-variable primal simplex for LP relaxations.
//!
//! Every row `a_i x (<=|=|>=) b_i` becomes `a_i x - r_i = 0` with a logical
//! variable `r_i` whose bounds encode the sense. Phase 1 minimizes the sum
//! of bound violations of the basic variables (no big-M); phase 2 minimizes
//! `c'x`. The basis inverse is dense and is rebuilt every
//! `refactor_every` pivots. Pricing is Dantzig with lowest-index ties;
//! after `bland_after` stalled pivots it switches to Bland's rule.
//!
//! Warm starts first run a dual simplex phase: after a bound change the old
//! basis is still dual feasible, so a few dual pivots usually restore primal
//! feasibility. The primal method then confirms optimality, and takes over
//! whenever the dual phase cannot proceed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MilpInstance, Sense};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub tol_feas: f64,
    pub tol_opt: f64,
    pub tol_pivot: f64,
    /// `None` means `50 * (n + m)`.
    pub max_iterations: Option<usize>,
    pub refactor_every: usize,
    pub bland_after: usize,
    /// Run the dual phase on warm starts.
    pub dual_warm_start: bool,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            tol_feas: 1e-7,
            tol_opt: 1e-7,
            tol_pivot: 1e-9,
            max_iterations: None,
            refactor_every: 50,
            bland_after: 100,
            dual_warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable sitting at zero.
    Free,
}

/// Statuses of the `n` structural then `m` logical variables, optionally
/// with the basis inverse it was solved with. Equality ignores the inverse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Basis {
    pub status: Vec<VarStatus>,
    #[serde(skip)]
    factor: Option<Arc<Factor>>,
}

#[derive(Debug)]
struct Factor {
    head: Vec<usize>,
    binv: Vec<f64>,
    pivots: usize,
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.status == other.status
    }
}

impl Eq for Basis {}

impl Basis {
    pub fn new(status: Vec<VarStatus>) -> Self {
        Basis { status, factor: None }
    }

    pub fn has_factor(&self) -> bool {
        self.factor.is_some()
    }

    /// Drops the cached inverse to save memory.
    pub fn drop_factor(&mut self) {
        self.factor = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    /// One per row; `c_j - sum_i y_i a_ij` gives the reduced costs.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    /// `A x` at the returned point.
    pub row_activity: Vec<f64>,
    pub iterations: usize,
    pub basis: Basis,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("pivot magnitude below tolerance; basis is numerically singular")]
    NumericalBreakdown,
    #[error("bound override on variable {var} loosens the base bounds")]
    LooseningOverride { var: usize },
    #[error("bound override refers to variable {0} which does not exist")]
    BadOverride(usize),
    #[error("non-finite problem data")]
    NonFinite,
}

/// Tightened bounds for one variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOverride {
    pub var: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Applies tightening overrides to the instance bounds.
pub fn apply_overrides(
    inst: &MilpInstance,
    overrides: &[BoundOverride],
) -> Result<(Vec<f64>, Vec<f64>), LpError> {
    let mut lower = inst.lower.clone();
    let mut upper = inst.upper.clone();
    for o in overrides {
        if o.var >= inst.num_vars() {
            return Err(LpError::BadOverride(o.var));
        }
        if o.lower < inst.lower[o.var] || o.upper > inst.upper[o.var] {
            return Err(LpError::LooseningOverride { var: o.var });
        }
        lower[o.var] = lower[o.var].max(o.lower);
        upper[o.var] = upper[o.var].min(o.upper);
    }
    Ok((lower, upper))
}

/// Solves the LP relaxation of `inst` with bound overrides.
pub fn solve_lp(inst: &MilpInstance, overrides: &[BoundOverride]) -> Result<LpResult, LpError> {
    let (lower, upper) = apply_overrides(inst, overrides)?;
    LpSolver::new(inst).solve(&lower, &upper, None)
}

/// Column storage of one instance; solves are independent and re-entrant.
#[derive(Debug, Clone)]
pub struct LpSolver<'a> {
    inst: &'a MilpInstance,
    cols: Vec<Vec<(usize, f64)>>,
    pub options: LpOptions,
}

impl<'a> LpSolver<'a> {
    pub fn new(inst: &'a MilpInstance) -> Self {
        LpSolver { inst, cols: inst.col_lists(), options: LpOptions::default() }
    }

    pub fn with_options(mut self, options: LpOptions) -> Self {
        self.options = options;
        self
    }

    pub fn instance(&self) -> &MilpInstance {
        self.inst
    }

    /// Solves with the given structural bounds, optionally warm-started from
    /// a previous basis of the same instance.
    pub fn solve(&self, lower: &[f64], upper: &[f64], warm: Option<&Basis>) -> Result<LpResult, LpError> {
        let inst = self.inst;
        let n = inst.num_vars();
        let m = inst.num_rows();
        if lower.len() != n || upper.len() != n {
            return Err(LpError::BadOverride(lower.len().max(upper.len())));
        }
        if lower.iter().chain(upper).any(|v| v.is_nan()) {
            return Err(LpError::NonFinite);
        }
        let mut lo = Vec::with_capacity(n + m);
        let mut up = Vec::with_capacity(n + m);
        lo.extend_from_slice(lower);
        up.extend_from_slice(upper);
        for i in 0..m {
            let (l, u) = row_bounds(inst.senses[i], inst.rhs[i]);
            lo.push(l);
            up.push(u);
        }
        // Trivially infeasible bounds: report without pivoting.
        if (0..n).any(|j| lo[j] > up[j] + self.options.tol_feas) {
            return Ok(self.infeasible_result(n, m, lo, up));
        }
        let mut ws = Workspace::new(self, lo, up);
        ws.init_basis(warm)?;
        if warm.is_some() && self.options.dual_warm_start && ws.dual_phase()? == DualOutcome::Infeasible {
            return Ok(ws.finish(LpStatus::Infeasible, &[]));
        }
        ws.run()
    }

    /// Attaches a fresh basis inverse to `basis` so later warm starts skip
    /// the factorization.
    pub fn factorize(&self, lower: &[f64], upper: &[f64], basis: &Basis) -> Result<Basis, LpError> {
        let (n, m) = (self.inst.num_vars(), self.inst.num_rows());
        let mut lo = lower.to_vec();
        let mut up = upper.to_vec();
        for i in 0..m {
            let (l, u) = row_bounds(self.inst.senses[i], self.inst.rhs[i]);
            lo.push(l);
            up.push(u);
        }
        if lo.len() != n + m || up.len() != n + m {
            return Err(LpError::BadOverride(lower.len()));
        }
        let mut ws = Workspace::new(self, lo, up);
        ws.init_basis(Some(basis))?;
        Ok(Basis {
            status: ws.status,
            factor: Some(Arc::new(Factor { head: ws.head, binv: ws.binv, pivots: 0 })),
        })
    }

    fn infeasible_result(&self, n: usize, m: usize, lo: Vec<f64>, up: Vec<f64>) -> LpResult {
        let status = (0..n + m)
            .map(|k| if k >= n { VarStatus::Basic } else { nonbasic_status(lo[k], up[k]) })
            .collect();
        LpResult {
            status: LpStatus::Infeasible,
            objective: f64::INFINITY,
            primal: vec![0.0; n],
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            row_activity: vec![0.0; m],
            iterations: 0,
            basis: Basis::new(status),
        }
    }
}

fn row_bounds(sense: Sense, b: f64) -> (f64, f64) {
    match sense {
        Sense::Le => (f64::NEG_INFINITY, b),
        Sense::Ge => (b, f64::INFINITY),
        Sense::Eq => (b, b),
    }
}

fn nonbasic_status(l: f64, u: f64) -> VarStatus {
    if l.is_finite() {
        VarStatus::AtLower
    } else if u.is_finite() {
        VarStatus::AtUpper
    } else {
        VarStatus::Free
    }
}

struct Workspace<'s, 'a> {
    solver: &'s LpSolver<'a>,
    n: usize,
    m: usize,
    lo: Vec<f64>,
    up: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    /// Basic variable in each basis position.
    head: Vec<usize>,
    /// Column-major dense `B^{-1}`.
    binv: Vec<f64>,
    iterations: usize,
    pivots_since_refactor: usize,
}

enum Phase {
    One,
    Two,
}

#[derive(Debug, PartialEq, Eq)]
enum DualOutcome {
    PrimalFeasible,
    Infeasible,
    /// Not dual feasible, stalled or out of iterations: use the primal method.
    Handover,
}

impl<'s, 'a> Workspace<'s, 'a> {
    fn new(solver: &'s LpSolver<'a>, lo: Vec<f64>, up: Vec<f64>) -> Self {
        let n = solver.inst.num_vars();
        let m = solver.inst.num_rows();
        Workspace {
            solver,
            n,
            m,
            lo,
            up,
            x: vec![0.0; n + m],
            status: vec![VarStatus::AtLower; n + m],
            head: Vec::new(),
            binv: Vec::new(),
            iterations: 0,
            pivots_since_refactor: 0,
        }
    }

    fn opts(&self) -> &LpOptions {
        &self.solver.options
    }

    /// Multiplies `B^{-1}` by column `k` of `[A, -I]`.
    fn ftran(&self, k: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        if k < self.n {
            for &(i, a) in &self.solver.cols[k] {
                for (o, b) in out.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                    *o += b * a;
                }
            }
        } else {
            let i = k - self.n;
            for (o, b) in out.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                *o = -b;
            }
        }
        out
    }

    fn pivot_binv(&mut self, p: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[p];
        let nz: Vec<usize> = (0..m).filter(|&i| i != p && alpha[i] != 0.0).collect();
        for col in self.binv.chunks_exact_mut(m) {
            if col[p] == 0.0 {
                continue;
            }
            let pv = col[p] / piv;
            col[p] = pv;
            for &i in &nz {
                col[i] -= alpha[i] * pv;
            }
        }
    }

    fn nonbasic_value(&self, k: usize) -> f64 {
        match self.status[k] {
            VarStatus::AtLower => self.lo[k],
            VarStatus::AtUpper => self.up[k],
            VarStatus::Free | VarStatus::Basic => 0.0,
        }
    }

    /// Normalizes a nonbasic status against the current bounds.
    fn fit_status(&self, k: usize, s: VarStatus) -> VarStatus {
        let (l, u) = (self.lo[k], self.up[k]);
        match s {
            VarStatus::AtLower if l.is_finite() => VarStatus::AtLower,
            VarStatus::AtUpper if u.is_finite() => VarStatus::AtUpper,
            _ => nonbasic_status(l, u),
        }
    }

    fn init_basis(&mut self, warm: Option<&Basis>) -> Result<(), LpError> {
        let (n, m) = (self.n, self.m);
        let wanted: Vec<VarStatus> = match warm {
            Some(b) if b.status.len() == n + m && b.status.iter().filter(|s| **s == VarStatus::Basic).count() == m => {
                b.status.clone()
            }
            _ => (0..n + m).map(|k| if k >= n { VarStatus::Basic } else { VarStatus::AtLower }).collect(),
        };
        for k in 0..n + m {
            self.status[k] = if wanted[k] == VarStatus::Basic { VarStatus::Basic } else { self.fit_status(k, wanted[k]) };
        }
        if let Some(f) = warm.and_then(|b| b.factor.as_ref()) {
            let consistent = f.head.len() == m
                && f.binv.len() == m * m
                && f.pivots < self.opts().refactor_every
                && f.head.iter().all(|&k| k < n + m && self.status[k] == VarStatus::Basic);
            if consistent {
                self.head = f.head.clone();
                self.binv = f.binv.clone();
                self.pivots_since_refactor = f.pivots;
                self.recompute_x();
                return Ok(());
            }
        }
        self.refactor()
    }

    /// Rebuilds `B^{-1}` starting from the all-logical basis and pivoting in
    /// the structural basic columns. Columns that turn out dependent are made
    /// nonbasic and the logical of that row stays basic.
    fn refactor(&mut self) -> Result<(), LpError> {
        let (n, m) = (self.n, self.m);
        let tol = self.opts().tol_pivot;
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = -1.0;
        }
        self.head = (n..n + m).collect();
        let structural: Vec<usize> = (0..n).filter(|&k| self.status[k] == VarStatus::Basic).collect();
        // Logicals that should leave the basis are preferred pivot slots.
        let mut replaceable: Vec<bool> = (0..m).map(|i| self.status[n + i] != VarStatus::Basic).collect();
        let mut occupied = vec![false; m];
        for &k in &structural {
            let alpha = self.ftran(k);
            let mut best: Option<(usize, f64)> = None;
            for p in 0..m {
                if occupied[p] || !replaceable[p] {
                    continue;
                }
                let a = alpha[p].abs();
                if a > tol && best.is_none_or(|(_, b)| a > b) {
                    best = Some((p, a));
                }
            }
            if best.is_none() {
                for p in 0..m {
                    if occupied[p] {
                        continue;
                    }
                    let a = alpha[p].abs();
                    if a > tol && best.is_none_or(|(_, b)| a > b) {
                        best = Some((p, a));
                    }
                }
            }
            match best {
                Some((p, _)) => {
                    let out = self.head[p];
                    self.pivot_binv(p, &alpha);
                    self.head[p] = k;
                    occupied[p] = true;
                    replaceable[p] = false;
                    if out >= n {
                        let s = if self.status[out] == VarStatus::Basic { VarStatus::AtLower } else { self.status[out] };
                        self.status[out] = self.fit_status(out, s);
                    }
                }
                None => {
                    self.status[k] = self.fit_status(k, VarStatus::AtLower);
                }
            }
        }
        for p in 0..m {
            self.status[self.head[p]] = VarStatus::Basic;
        }
        let mut in_head = vec![false; n + m];
        for &k in &self.head {
            in_head[k] = true;
        }
        for k in 0..n + m {
            if self.status[k] != VarStatus::Basic && !in_head[k] {
                let s = self.status[k];
                self.status[k] = self.fit_status(k, s);
            }
        }
        self.recompute_x();
        self.pivots_since_refactor = 0;
        if self.binv.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NumericalBreakdown);
        }
        Ok(())
    }

    /// x_B = -B^{-1} N x_N.
    fn recompute_x(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut rhs = vec![0.0; m];
        for k in 0..n + m {
            if self.status[k] == VarStatus::Basic {
                continue;
            }
            let v = self.nonbasic_value(k);
            self.x[k] = v;
            if v == 0.0 {
                continue;
            }
            if k < n {
                for &(i, a) in &self.solver.cols[k] {
                    rhs[i] -= a * v;
                }
            } else {
                rhs[k - n] += v;
            }
        }
        let mut xb = vec![0.0; m];
        for (i, &r) in rhs.iter().enumerate() {
            if r != 0.0 {
                for (v, b) in xb.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                    *v += b * r;
                }
            }
        }
        for p in 0..m {
            self.x[self.head[p]] = xb[p];
        }
    }

    fn infeasibility(&self, k: usize) -> f64 {
        let tol = self.opts().tol_feas;
        let v = self.x[k];
        if v < self.lo[k] - tol {
            self.lo[k] - v
        } else if v > self.up[k] + tol {
            v - self.up[k]
        } else {
            0.0
        }
    }

    fn phase_costs(&self, phase: &Phase) -> Vec<f64> {
        let tol = self.opts().tol_feas;
        match phase {
            Phase::Two => self.head.iter().map(|&k| if k < self.n { self.solver.inst.objective[k] } else { 0.0 }).collect(),
            Phase::One => self
                .head
                .iter()
                .map(|&k| {
                    if self.x[k] < self.lo[k] - tol {
                        -1.0
                    } else if self.x[k] > self.up[k] + tol {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }

    fn duals(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        if m == 0 {
            return Vec::new();
        }
        let nz: Vec<usize> = (0..m).filter(|&p| cb[p] != 0.0).collect();
        self.binv
            .chunks_exact(m)
            .map(|col| nz.iter().fold(0.0, |acc, &p| acc + cb[p] * col[p]))
            .collect()
    }

    fn reduced_cost(&self, k: usize, y: &[f64], phase: &Phase) -> f64 {
        if k < self.n {
            let c = match phase {
                Phase::Two => self.solver.inst.objective[k],
                Phase::One => 0.0,
            };
            c - self.solver.cols[k].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
        } else {
            y[k - self.n]
        }
    }

    fn phase_objective(&self, phase: &Phase) -> f64 {
        match phase {
            Phase::One => self.head.iter().map(|&k| self.infeasibility(k)).sum(),
            Phase::Two => (0..self.n).map(|j| self.solver.inst.objective[j] * self.x[j]).sum(),
        }
    }

    /// Picks the entering variable and its direction (+1 increase, -1 decrease).
    fn price(&self, y: &[f64], phase: &Phase, bland: bool) -> Option<(usize, f64)> {
        let tol = self.opts().tol_opt;
        let mut best: Option<(usize, f64, f64)> = None;
        for k in 0..self.n + self.m {
            let dir = match self.status[k] {
                VarStatus::Basic => continue,
                _ if self.lo[k] == self.up[k] => continue,
                VarStatus::AtLower => {
                    let d = self.reduced_cost(k, y, phase);
                    if d < -tol { Some((1.0, -d)) } else { None }
                }
                VarStatus::AtUpper => {
                    let d = self.reduced_cost(k, y, phase);
                    if d > tol { Some((-1.0, d)) } else { None }
                }
                VarStatus::Free => {
                    let d = self.reduced_cost(k, y, phase);
                    if d.abs() > tol { Some((-d.signum(), d.abs())) } else { None }
                }
            };
            if let Some((dir, score)) = dir {
                if bland {
                    return Some((k, dir));
                }
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((k, dir, score));
                }
            }
        }
        best.map(|(k, d, _)| (k, d))
    }

    fn residuals_ok(&self, y: &[f64]) -> bool {
        let n = self.n;
        let mut act = vec![0.0; self.m];
        let mut scale = vec![1.0f64; self.m];
        for (j, col) in self.solver.cols.iter().enumerate() {
            for &(i, a) in col {
                act[i] += a * self.x[j];
                scale[i] = scale[i].max((a * self.x[j]).abs());
            }
        }
        let primal = (0..self.m).all(|i| (act[i] - self.x[n + i]).abs() <= 1e-9 * scale[i].max(self.x[n + i].abs()));
        primal
            && self.head.iter().all(|&k| {
                let c = if k < n { self.solver.inst.objective[k].abs() } else { 0.0 };
                self.reduced_cost(k, y, &Phase::Two).abs() <= 1e-9 * (1.0 + c)
            })
    }

    /// Dual simplex from a dual feasible basis. Boxed nonbasics with the
    /// wrong reduced-cost sign are flipped to their other bound first.
    fn dual_phase(&mut self) -> Result<DualOutcome, LpError> {
        let (n, m) = (self.n, self.m);
        let tol_opt = self.opts().tol_opt;
        let tol_feas = self.opts().tol_feas;
        let tol_pivot = self.opts().tol_pivot;
        let max_iter = self.opts().max_iterations.unwrap_or(50 * (n + m).max(1));
        let stall_cap = self.opts().bland_after;
        if m == 0 {
            return Ok(DualOutcome::Handover);
        }
        let y = self.duals(&self.phase_costs(&Phase::Two));
        let mut flipped = false;
        for k in 0..n + m {
            if self.status[k] == VarStatus::Basic || self.lo[k] == self.up[k] {
                continue;
            }
            let d = self.reduced_cost(k, &y, &Phase::Two);
            let s = self.status[k];
            let wrong = match s {
                VarStatus::AtLower => d < -tol_opt,
                VarStatus::AtUpper => d > tol_opt,
                VarStatus::Free => d.abs() > tol_opt,
                VarStatus::Basic => false,
            };
            if wrong {
                if !(self.lo[k].is_finite() && self.up[k].is_finite()) {
                    return Ok(DualOutcome::Handover);
                }
                self.status[k] = if s == VarStatus::AtLower { VarStatus::AtUpper } else { VarStatus::AtLower };
                flipped = true;
            }
        }
        if flipped {
            self.recompute_x();
        }
        let mut degenerate = 0usize;
        let mut refactored_for_check = false;
        loop {
            // Leaving row: largest bound violation, lowest position on ties.
            let mut leave: Option<(usize, f64)> = None;
            for p in 0..m {
                let v = self.infeasibility(self.head[p]);
                if v > 0.0 && leave.is_none_or(|(_, b)| v > b) {
                    leave = Some((p, v));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(DualOutcome::PrimalFeasible);
            };
            if self.iterations >= max_iter || degenerate > stall_cap {
                return Ok(DualOutcome::Handover);
            }
            let kr = self.head[r];
            let below = self.x[kr] < self.lo[kr] - tol_feas;
            let bound = if below { self.lo[kr] } else { self.up[kr] };
            let y = self.duals(&self.phase_costs(&Phase::Two));
            // Row r of B^{-1} and of B^{-1}[A, -I].
            let rho: Vec<f64> = (0..m).map(|i| self.binv[i * m + r]).collect();
            let mut enter: Option<(usize, f64, f64)> = None; // (var, ratio, |alpha|)
            for k in 0..n + m {
                let s = self.status[k];
                if s == VarStatus::Basic || self.lo[k] == self.up[k] {
                    continue;
                }
                let a = if k < n {
                    self.solver.cols[k].iter().map(|&(i, v)| rho[i] * v).sum::<f64>()
                } else {
                    -rho[k - n]
                };
                if a.abs() <= tol_pivot {
                    continue;
                }
                // x_r moves by -a per unit increase of x_k.
                let can_up = matches!(s, VarStatus::AtLower | VarStatus::Free);
                let can_down = matches!(s, VarStatus::AtUpper | VarStatus::Free);
                let ok = if below { (a < 0.0 && can_up) || (a > 0.0 && can_down) } else { (a > 0.0 && can_up) || (a < 0.0 && can_down) };
                if !ok {
                    continue;
                }
                let d = self.reduced_cost(k, &y, &Phase::Two);
                let ratio = d.abs() / a.abs();
                let better = match enter {
                    None => true,
                    Some((_, t, aa)) => ratio < t - 1e-12 || (ratio <= t + 1e-12 && a.abs() > aa),
                };
                if better {
                    enter = Some((k, ratio, a.abs()));
                }
            }
            let Some((q, ratio, _)) = enter else {
                if self.pivots_since_refactor > 0 && !refactored_for_check {
                    self.refactor()?;
                    refactored_for_check = true;
                    continue;
                }
                return Ok(DualOutcome::Infeasible);
            };
            refactored_for_check = false;
            degenerate = if ratio <= 1e-12 { degenerate + 1 } else { 0 };
            self.iterations += 1;
            let alpha = self.ftran(q);
            if alpha[r].abs() <= tol_pivot {
                return Ok(DualOutcome::Handover);
            }
            let theta = (self.x[kr] - bound) / alpha[r];
            for p in 0..m {
                let k = self.head[p];
                self.x[k] -= theta * alpha[p];
            }
            self.x[q] += theta;
            self.x[kr] = bound;
            self.status[kr] = if below || self.lo[kr] == self.up[kr] { VarStatus::AtLower } else { VarStatus::AtUpper };
            self.status[q] = VarStatus::Basic;
            self.head[r] = q;
            self.pivot_binv(r, &alpha);
            self.pivots_since_refactor += 1;
            if self.pivots_since_refactor >= self.opts().refactor_every {
                self.refactor()?;
            }
        }
    }

    fn run(mut self) -> Result<LpResult, LpError> {
        let (n, m) = (self.n, self.m);
        let max_iter = self.opts().max_iterations.unwrap_or(50 * (n + m).max(1));
        let tol_pivot = self.opts().tol_pivot;
        let tol_feas = self.opts().tol_feas;
        let mut stalled = 0usize;
        let mut last_obj = f64::INFINITY;
        let mut last_phase_one = true;
        loop {
            let phase = if self.head.iter().any(|&k| self.infeasibility(k) > 0.0) { Phase::One } else { Phase::Two };
            let is_one = matches!(phase, Phase::One);
            if is_one != last_phase_one {
                stalled = 0;
                last_obj = f64::INFINITY;
                last_phase_one = is_one;
            }
            let obj = self.phase_objective(&phase);
            if obj < last_obj - 1e-12 * (1.0 + obj.abs()) {
                stalled = 0;
            } else {
                stalled += 1;
            }
            last_obj = last_obj.min(obj);
            let bland = stalled > self.opts().bland_after;

            let cb = self.phase_costs(&phase);
            let y = self.duals(&cb);
            let Some((q, dir)) = self.price(&y, &phase, bland) else {
                // Refactor and retry unless the updated factorization still
                // reproduces the rows and the basic reduced costs.
                let accurate = matches!(phase, Phase::Two) && self.residuals_ok(&y);
                if self.pivots_since_refactor > 0 && !accurate {
                    self.refactor()?;
                    continue;
                }
                return Ok(match phase {
                    Phase::One => self.finish(LpStatus::Infeasible, &y),
                    Phase::Two => self.finish(LpStatus::Optimal, &y),
                });
            };
            if self.iterations >= max_iter {
                return Ok(self.finish(LpStatus::IterationLimit, &y));
            }
            self.iterations += 1;

            let alpha = self.ftran(q);
            // Ratio test. Basic var at position p changes by -dir * alpha[p] per unit step.
            let mut t_best = if self.lo[q].is_finite() && self.up[q].is_finite() {
                self.up[q] - self.lo[q]
            } else {
                f64::INFINITY
            };
            let mut leave: Option<(usize, f64, bool)> = None; // (position, bound value, to_upper)
            for p in 0..m {
                let a = alpha[p];
                if a.abs() <= tol_pivot {
                    continue;
                }
                let k = self.head[p];
                let rate = -dir * a;
                let v = self.x[k];
                let (l, u) = (self.lo[k], self.up[k]);
                let (t, bound, to_upper) = if is_one && v < l - tol_feas {
                    if rate > 0.0 { ((l - v) / rate, l, false) } else { continue }
                } else if is_one && v > u + tol_feas {
                    if rate < 0.0 { ((v - u) / -rate, u, true) } else { continue }
                } else if rate < 0.0 {
                    if !l.is_finite() {
                        continue;
                    }
                    (((v - l) / -rate).max(0.0), l, false)
                } else {
                    if !u.is_finite() {
                        continue;
                    }
                    (((u - v) / rate).max(0.0), u, true)
                };
                // A bound flip of the entering variable wins exact ties.
                let better = match leave {
                    None => t < t_best,
                    Some((bp, _, _)) => {
                        if t < t_best - 1e-12 {
                            true
                        } else if t > t_best + 1e-12 {
                            false
                        } else if bland {
                            k < self.head[bp]
                        } else {
                            let (ab, ap) = (a.abs(), alpha[bp].abs());
                            ab > ap || (ab == ap && k < self.head[bp])
                        }
                    }
                };
                if better {
                    t_best = t;
                    leave = Some((p, bound, to_upper));
                }
            }
            if !t_best.is_finite() {
                if is_one {
                    return Err(LpError::NumericalBreakdown);
                }
                return Ok(self.finish(LpStatus::Unbounded, &y));
            }
            let t = t_best;
            for p in 0..m {
                let k = self.head[p];
                self.x[k] -= t * dir * alpha[p];
            }
            self.x[q] += t * dir;
            match leave {
                None => {
                    // Bound flip of the entering variable.
                    if dir > 0.0 {
                        self.status[q] = VarStatus::AtUpper;
                        self.x[q] = self.up[q];
                    } else {
                        self.status[q] = VarStatus::AtLower;
                        self.x[q] = self.lo[q];
                    }
                }
                Some((p, bound, to_upper)) => {
                    if alpha[p].abs() < tol_pivot {
                        return Err(LpError::NumericalBreakdown);
                    }
                    let out = self.head[p];
                    self.x[out] = bound;
                    self.status[out] = if self.lo[out] == self.up[out] || !to_upper {
                        VarStatus::AtLower
                    } else {
                        VarStatus::AtUpper
                    };
                    self.status[q] = VarStatus::Basic;
                    self.head[p] = q;
                    self.pivot_binv(p, &alpha);
                    self.pivots_since_refactor += 1;
                    if self.pivots_since_refactor >= self.opts().refactor_every {
                        self.refactor()?;
                    }
                }
            }
        }
    }

    fn finish(self, status: LpStatus, y: &[f64]) -> LpResult {
        let (n, m) = (self.n, self.m);
        let inst = self.solver.inst;
        let primal: Vec<f64> = self.x[..n].to_vec();
        let mut row_activity = vec![0.0; m];
        for e in &inst.entries {
            row_activity[e.row] += e.value * primal[e.col];
        }
        let (duals, reduced_costs) = if status == LpStatus::Optimal {
            let rc = (0..n)
                .map(|j| if self.status[j] == VarStatus::Basic { 0.0 } else { self.reduced_cost(j, y, &Phase::Two) })
                .collect();
            (y.to_vec(), rc)
        } else {
            (vec![0.0; m], vec![0.0; n])
        };
        let objective = match status {
            LpStatus::Optimal | LpStatus::IterationLimit => inst.objective_value(&primal),
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        };
        LpResult {
            status,
            objective,
            primal,
            duals,
            reduced_costs,
            row_activity,
            iterations: self.iterations,
            basis: Basis {
                status: self.status,
                factor: Some(Arc::new(Factor { head: self.head, binv: self.binv, pivots: self.pivots_since_refactor })),
            },
        }
    }
}
