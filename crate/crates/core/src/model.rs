//! MILP data model and the static bipartite instance graph.
//!
//! An instance is `min c'x  s.t.  A x (<=|=|>=) b,  l <= x <= u`, with an
//! integrality flag per column. `A` is kept as a row-major sorted triplet
//! list; the position of a triplet in that list is its edge id in the
//! instance graph.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn token(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    pub fn from_token(s: &str) -> Option<Sense> {
        match s {
            "<=" => Some(Sense::Le),
            "=" => Some(Sense::Eq),
            ">=" => Some(Sense::Ge),
            _ => None,
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One nonzero of the constraint matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("entry ({row}, {col}) is outside a {rows}x{cols} matrix")]
    EntryOutOfRange { row: usize, col: usize, rows: usize, cols: usize },
    #[error("duplicate entry ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("non-finite coefficient at ({row}, {col})")]
    NonFiniteCoefficient { row: usize, col: usize },
    #[error("variable {0}: lower bound exceeds upper bound")]
    InvertedBounds(usize),
    #[error("variable {0}: bounds must not be NaN and lower/upper may not be +inf/-inf respectively")]
    BadBound(usize),
    #[error("vector `{name}` has length {got}, expected {expected}")]
    Length { name: &'static str, got: usize, expected: usize },
    #[error("non-finite objective or right-hand side value")]
    NonFiniteData,
    #[error("instance has no integer variable")]
    NoIntegerVariable,
}

/// `min c'x s.t. Ax o b, l <= x <= u`, x_j integer where flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpInstance {
    pub name: String,
    /// Generator metadata, free text (e.g. `set_covering rows=40 cols=80 seed=3`).
    pub provenance: String,
    pub objective: Vec<f64>,
    /// Sorted by (row, col), no duplicates, no explicit zeros required.
    pub entries: Vec<Entry>,
    pub rhs: Vec<f64>,
    pub senses: Vec<Sense>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integrality: Vec<bool>,
}

impl MilpInstance {
    /// Builds and validates an instance. Entries are sorted into canonical
    /// row-major order.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        objective: Vec<f64>,
        mut entries: Vec<Entry>,
        rhs: Vec<f64>,
        senses: Vec<Sense>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        integrality: Vec<bool>,
    ) -> Result<Self, ModelError> {
        entries.sort_by(|a, b| (a.row, a.col).cmp(&(b.row, b.col)));
        let inst = MilpInstance {
            name: name.into(),
            provenance: String::new(),
            objective,
            entries,
            rhs,
            senses,
            lower,
            upper,
            integrality,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn num_integer(&self) -> usize {
        self.integrality.iter().filter(|&&b| b).count()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.num_vars();
        let m = self.num_rows();
        for (name, got, expected) in [
            ("lower", self.lower.len(), n),
            ("upper", self.upper.len(), n),
            ("integrality", self.integrality.len(), n),
            ("senses", self.senses.len(), m),
        ] {
            if got != expected {
                return Err(ModelError::Length { name, got, expected });
            }
        }
        if self.objective.iter().chain(&self.rhs).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteData);
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(ModelError::BadBound(j));
            }
            if l > u {
                return Err(ModelError::InvertedBounds(j));
            }
        }
        let mut prev: Option<(usize, usize)> = None;
        for e in &self.entries {
            if e.row >= m || e.col >= n {
                return Err(ModelError::EntryOutOfRange { row: e.row, col: e.col, rows: m, cols: n });
            }
            if !e.value.is_finite() {
                return Err(ModelError::NonFiniteCoefficient { row: e.row, col: e.col });
            }
            let key = (e.row, e.col);
            if let Some(p) = prev {
                if p == key {
                    return Err(ModelError::DuplicateEntry { row: e.row, col: e.col });
                }
                debug_assert!(p < key, "entries must be sorted");
            }
            prev = Some(key);
        }
        Ok(())
    }

    /// Row-wise views `(col, value)` of the constraint matrix.
    pub fn row_lists(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.num_rows()];
        for e in &self.entries {
            rows[e.row].push((e.col, e.value));
        }
        rows
    }

    /// Column-wise views `(row, value)` of the constraint matrix.
    pub fn col_lists(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.num_vars()];
        for e in &self.entries {
            cols[e.col].push((e.row, e.value));
        }
        cols
    }

    pub fn row_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.num_rows()];
        for e in &self.entries {
            sq[e.row] += e.value * e.value;
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Checks bounds, rows and integrality of `x` within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.num_vars() {
            return false;
        }
        for j in 0..x.len() {
            if x[j] < self.lower[j] - tol || x[j] > self.upper[j] + tol {
                return false;
            }
            if self.integrality[j] && (x[j] - x[j].round()).abs() > tol {
                return false;
            }
        }
        let mut act = vec![0.0; self.num_rows()];
        for e in &self.entries {
            act[e.row] += e.value * x[e.col];
        }
        act.iter().zip(&self.rhs).zip(&self.senses).all(|((a, b), s)| match s {
            Sense::Le => *a <= b + tol,
            Sense::Ge => *a >= b - tol,
            Sense::Eq => (a - b).abs() <= tol,
        })
    }
}

/// Variable type categories of the instance and sample features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarType {
    Binary,
    Integer,
    ImplicitInteger,
    Continuous,
}

impl VarType {
    pub fn of(integral: bool, lower: f64, upper: f64) -> VarType {
        if !integral {
            VarType::Continuous
        } else if lower == 0.0 && upper == 1.0 {
            VarType::Binary
        } else {
            VarType::Integer
        }
    }

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self as usize] = 1.0;
        v
    }
}

pub const INSTANCE_VAR_FEATURES: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct VarNode {
    /// Column in the source instance.
    pub col: usize,
    /// objective, type one-hot (4), has-lb, has-ub, at-lb, at-ub.
    pub features: [f64; INSTANCE_VAR_FEATURES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsNode {
    /// Row in the source instance.
    pub row: usize,
    /// Right-hand side over `max(||A_i||, 1)`.
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    /// Index into `cons_nodes`.
    pub cons: usize,
    /// Index into `var_nodes`.
    pub var: usize,
    pub coeff: f64,
    /// Position of the originating triplet in the source instance.
    pub source: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("variable node refers to column {0} which the source instance does not have")]
    DanglingVariable(usize),
    #[error("constraint node refers to row {0} which the source instance does not have")]
    DanglingConstraint(usize),
    #[error("edge {0} refers to a missing node")]
    DanglingEdge(usize),
    #[error("node for column/row {0} appears twice")]
    DuplicateNode(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Static bipartite view of an instance: one node per variable and per
/// constraint, one edge per nonzero of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGraph {
    pub source: MilpInstance,
    pub var_nodes: Vec<VarNode>,
    pub cons_nodes: Vec<ConsNode>,
    pub edges: Vec<GraphEdge>,
}

pub fn var_features(inst: &MilpInstance, j: usize) -> [f64; INSTANCE_VAR_FEATURES] {
    let (l, u) = (inst.lower[j], inst.upper[j]);
    let t = VarType::of(inst.integrality[j], l, u).one_hot();
    let fixed = if l == u { 1.0 } else { 0.0 };
    [
        inst.objective[j],
        t[0],
        t[1],
        t[2],
        t[3],
        f64::from(u8::from(l.is_finite())),
        f64::from(u8::from(u.is_finite())),
        fixed,
        fixed,
    ]
}

pub fn to_instance_graph(inst: &MilpInstance) -> InstanceGraph {
    let norms = inst.row_norms();
    let var_nodes = (0..inst.num_vars())
        .map(|j| VarNode { col: j, features: var_features(inst, j) })
        .collect();
    let cons_nodes = (0..inst.num_rows())
        .map(|i| ConsNode { row: i, bias: inst.rhs[i] / norms[i].max(1.0) })
        .collect();
    let edges = inst
        .entries
        .iter()
        .enumerate()
        .map(|(k, e)| GraphEdge { cons: e.row, var: e.col, coeff: e.value, source: k })
        .collect();
    InstanceGraph { source: inst.clone(), var_nodes, cons_nodes, edges }
}

impl InstanceGraph {
    pub fn num_vars(&self) -> usize {
        self.var_nodes.len()
    }

    pub fn num_cons(&self) -> usize {
        self.cons_nodes.len()
    }

    /// Removes the listed variable nodes and their incident edges. Indices
    /// refer to the current node order.
    pub fn remove_vars(&mut self, nodes: &[usize]) {
        let drop = index_mask(self.var_nodes.len(), nodes);
        let remap = compact_map(&drop);
        self.var_nodes = retain_by_mask(std::mem::take(&mut self.var_nodes), &drop);
        self.edges.retain(|e| !drop[e.var]);
        for e in &mut self.edges {
            e.var = remap[e.var];
        }
    }

    /// Removes the listed constraint nodes and their incident edges.
    pub fn remove_cons(&mut self, nodes: &[usize]) {
        let drop = index_mask(self.cons_nodes.len(), nodes);
        let remap = compact_map(&drop);
        self.cons_nodes = retain_by_mask(std::mem::take(&mut self.cons_nodes), &drop);
        self.edges.retain(|e| !drop[e.cons]);
        for e in &mut self.edges {
            e.cons = remap[e.cons];
        }
    }

    /// Removes the listed edges (by position in `edges`).
    pub fn remove_edges(&mut self, edges: &[usize]) {
        let drop = index_mask(self.edges.len(), edges);
        self.edges = retain_by_mask(std::mem::take(&mut self.edges), &drop);
    }
}

fn index_mask(len: usize, idx: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; len];
    for &i in idx {
        if i < len {
            mask[i] = true;
        }
    }
    mask
}

fn compact_map(drop: &[bool]) -> Vec<usize> {
    let mut next = 0;
    drop.iter()
        .map(|&d| {
            let k = next;
            if !d {
                next += 1;
            }
            k
        })
        .collect()
}

fn retain_by_mask<T>(v: Vec<T>, drop: &[bool]) -> Vec<T> {
    v.into_iter().zip(drop).filter(|(_, &d)| !d).map(|(x, _)| x).collect()
}

/// Value a removed variable is fixed at: its finite lower bound, else its
/// finite upper bound. `None` for a free variable.
pub fn masked_fix_value(lower: f64, upper: f64) -> Option<f64> {
    if lower.is_finite() {
        Some(lower)
    } else if upper.is_finite() {
        Some(upper)
    } else {
        None
    }
}

/// Rebuilds an instance from a (possibly masked) graph. Rows follow the
/// constraint node order; all source columns are kept, and columns without a
/// variable node are fixed at a finite bound and marked continuous.
pub fn from_instance_graph(g: &InstanceGraph) -> Result<MilpInstance, GraphError> {
    let src = &g.source;
    let n = src.num_vars();
    let mut present = vec![false; n];
    for v in &g.var_nodes {
        if v.col >= n {
            return Err(GraphError::DanglingVariable(v.col));
        }
        if present[v.col] {
            return Err(GraphError::DuplicateNode(v.col));
        }
        present[v.col] = true;
    }
    let mut seen_rows = vec![false; src.num_rows()];
    for c in &g.cons_nodes {
        if c.row >= src.num_rows() {
            return Err(GraphError::DanglingConstraint(c.row));
        }
        if seen_rows[c.row] {
            return Err(GraphError::DuplicateNode(c.row));
        }
        seen_rows[c.row] = true;
    }
    let mut entries = Vec::with_capacity(g.edges.len());
    for (k, e) in g.edges.iter().enumerate() {
        if e.cons >= g.cons_nodes.len() || e.var >= g.var_nodes.len() {
            return Err(GraphError::DanglingEdge(k));
        }
        entries.push(Entry { row: e.cons, col: g.var_nodes[e.var].col, value: e.coeff });
    }
    let rhs = g.cons_nodes.iter().map(|c| src.rhs[c.row]).collect();
    let senses = g.cons_nodes.iter().map(|c| src.senses[c.row]).collect();
    let mut lower = src.lower.clone();
    let mut upper = src.upper.clone();
    let mut integrality = src.integrality.clone();
    for j in 0..n {
        if !present[j] {
            if let Some(v) = masked_fix_value(src.lower[j], src.upper[j]) {
                lower[j] = v;
                upper[j] = v;
            }
            integrality[j] = false;
        }
    }
    let mut out = MilpInstance::new(
        src.name.clone(),
        src.objective.clone(),
        entries,
        rhs,
        senses,
        lower,
        upper,
        integrality,
    )?;
    out.provenance = src.provenance.clone();
    Ok(out)
}
