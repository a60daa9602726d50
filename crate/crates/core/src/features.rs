//! Branching samples: the bipartite graph of the current subproblem with
//! solver statistics attached.
//!
//! Variable feature layout (19):
//!
//! | idx   | feature                                              |
//! |-------|------------------------------------------------------|
//! | 0-3   | type one-hot (binary, integer, implicit int, cont.)  |
//! | 4     | objective coefficient / ‖c‖₂                          |
//! | 5, 6  | has finite local lower / upper bound                 |
//! | 7, 8  | LP value at local lower / upper bound                |
//! | 9     | fractional part of the LP value                      |
//! | 10-13 | basis status one-hot (lower, basic, upper, zero)     |
//! | 14    | reduced cost / ‖c‖₂                                   |
//! | 15    | age: LP iterations since last basic / total          |
//! | 16    | LP value                                             |
//! | 17    | incumbent value (0 without incumbent)                |
//! | 18    | running mean of incumbent values (0 without one)     |
//!
//! Constraint feature layout (5): cosine(c, A_i), b_i / max(‖A_i‖₂, 1),
//! age since last tight, y_i / max(‖A_i‖₂, 1), tight flag.
//! Edge feature: A_ij / ‖A_i‖₂.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::lp::{LpResult, VarStatus};
use crate::model::{MilpInstance, VarType};

pub const VAR_FEATURES: usize = 19;
pub const CONS_FEATURES: usize = 5;

/// Tolerance for "at bound" / "tight" / integral tests in the features.
pub const FEATURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleEdge {
    pub cons: u32,
    pub var: u32,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub var_features: Vec<[f64; VAR_FEATURES]>,
    pub cons_features: Vec<[f64; CONS_FEATURES]>,
    /// Shared by every sample of the same instance.
    pub edges: Arc<Vec<SampleEdge>>,
    pub candidate_mask: Vec<bool>,
    pub depth: usize,
    pub parent_objective: f64,
}

impl BranchSample {
    pub fn num_vars(&self) -> usize {
        self.var_features.len()
    }

    pub fn num_cons(&self) -> usize {
        self.cons_features.len()
    }

    pub fn candidates(&self) -> Vec<usize> {
        self.candidate_mask.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect()
    }
}

/// Best solution so far plus the running mean over every accepted incumbent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IncumbentState {
    pub best: Option<Vec<f64>>,
    pub mean: Vec<f64>,
    pub count: usize,
}

impl IncumbentState {
    pub fn accept(&mut self, x: &[f64]) {
        if self.mean.len() != x.len() {
            self.mean = vec![0.0; x.len()];
        }
        self.count += 1;
        let k = self.count as f64;
        for (m, v) in self.mean.iter_mut().zip(x) {
            *m += (v - *m) / k;
        }
        self.best = Some(x.to_vec());
    }
}

/// LP-iteration stamps of the last time each column was basic and each row
/// was tight.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgeCounters {
    pub total_iterations: u64,
    pub var_last_active: Vec<u64>,
    pub cons_last_active: Vec<u64>,
}

impl AgeCounters {
    pub fn new(n: usize, m: usize) -> Self {
        AgeCounters { total_iterations: 0, var_last_active: vec![0; n], cons_last_active: vec![0; m] }
    }

    pub fn observe(&mut self, inst: &MilpInstance, lp: &LpResult) {
        let now = self.total_iterations;
        for (j, s) in lp.basis.status.iter().take(inst.num_vars()).enumerate() {
            if *s == VarStatus::Basic {
                self.var_last_active[j] = now;
            }
        }
        for i in 0..inst.num_rows() {
            if row_is_tight(lp.row_activity[i], inst.rhs[i]) {
                self.cons_last_active[i] = now;
            }
        }
    }

    fn age(&self, last: u64) -> f64 {
        if self.total_iterations == 0 {
            0.0
        } else {
            (self.total_iterations - last.min(self.total_iterations)) as f64 / self.total_iterations as f64
        }
    }
}

fn row_is_tight(activity: f64, rhs: f64) -> bool {
    (activity - rhs).abs() <= FEATURE_TOL * (1.0 + rhs.abs())
}

/// Per-instance constants reused by every extraction in one solve.
#[derive(Debug, Clone)]
pub struct StaticFeatures {
    pub obj_norm: f64,
    pub row_norms: Vec<f64>,
    pub cosine: Vec<f64>,
    pub edges: Arc<Vec<SampleEdge>>,
}

impl StaticFeatures {
    pub fn new(inst: &MilpInstance) -> Self {
        let obj_norm = inst.objective.iter().map(|c| c * c).sum::<f64>().sqrt();
        let row_norms = inst.row_norms();
        let mut dots = vec![0.0; inst.num_rows()];
        for e in &inst.entries {
            dots[e.row] += e.value * inst.objective[e.col];
        }
        let cosine = dots
            .iter()
            .zip(&row_norms)
            .map(|(d, r)| if *r > 0.0 && obj_norm > 0.0 { (d / (r * obj_norm)).clamp(-1.0, 1.0) } else { 0.0 })
            .collect();
        let edges = inst
            .entries
            .iter()
            .map(|e| SampleEdge { cons: e.row as u32, var: e.col as u32, coeff: e.value / row_norms[e.row] })
            .collect();
        StaticFeatures { obj_norm, row_norms, cosine, edges: Arc::new(edges) }
    }
}

/// Fractional part in `[0, 1)`, snapping values within tolerance of an
/// integer to zero.
pub fn fractionality(x: f64) -> f64 {
    if (x - x.round()).abs() <= FEATURE_TOL {
        0.0
    } else {
        x - x.floor()
    }
}

/// Builds the branching sample of a node from its LP solution.
#[allow(clippy::too_many_arguments)]
pub fn extract(
    inst: &MilpInstance,
    statics: &StaticFeatures,
    lower: &[f64],
    upper: &[f64],
    lp: &LpResult,
    candidates: &[usize],
    incumbent: &IncumbentState,
    ages: &AgeCounters,
    depth: usize,
    parent_objective: f64,
) -> BranchSample {
    let n = inst.num_vars();
    let m = inst.num_rows();
    let cnorm = if statics.obj_norm > 0.0 { statics.obj_norm } else { 1.0 };
    let mut var_features = Vec::with_capacity(n);
    for j in 0..n {
        let (l, u) = (lower[j], upper[j]);
        let x = lp.primal[j];
        let mut f = [0.0; VAR_FEATURES];
        f[0..4].copy_from_slice(&VarType::of(inst.integrality[j], inst.lower[j], inst.upper[j]).one_hot());
        f[4] = inst.objective[j] / cnorm;
        f[5] = f64::from(u8::from(l.is_finite()));
        f[6] = f64::from(u8::from(u.is_finite()));
        f[7] = f64::from(u8::from(l.is_finite() && (x - l).abs() <= FEATURE_TOL));
        f[8] = f64::from(u8::from(u.is_finite() && (x - u).abs() <= FEATURE_TOL));
        f[9] = fractionality(x);
        let slot = match lp.basis.status[j] {
            VarStatus::AtLower => 10,
            VarStatus::Basic => 11,
            VarStatus::AtUpper => 12,
            VarStatus::Free => 13,
        };
        f[slot] = 1.0;
        f[14] = lp.reduced_costs[j] / cnorm;
        f[15] = ages.age(ages.var_last_active.get(j).copied().unwrap_or(0));
        f[16] = x;
        if let Some(best) = &incumbent.best {
            f[17] = best[j];
            f[18] = incumbent.mean[j];
        }
        var_features.push(f);
    }
    let mut cons_features = Vec::with_capacity(m);
    for i in 0..m {
        let scale = statics.row_norms[i].max(1.0);
        cons_features.push([
            statics.cosine[i],
            inst.rhs[i] / scale,
            ages.age(ages.cons_last_active.get(i).copied().unwrap_or(0)),
            lp.duals[i] / scale,
            f64::from(u8::from(row_is_tight(lp.row_activity[i], inst.rhs[i]))),
        ]);
    }
    let mut candidate_mask = vec![false; n];
    for &j in candidates {
        candidate_mask[j] = true;
    }
    BranchSample {
        var_features,
        cons_features,
        edges: Arc::clone(&statics.edges),
        candidate_mask,
        depth,
        parent_objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::solve_lp;
    use crate::model::{Entry, Sense};

    fn inst() -> MilpInstance {
        // min x0 + x1 + 2 x2  s.t.  x0 + x1 >= 1.5, 2x0 + 2x1 + 4x2 <= 20
        MilpInstance::new(
            "f",
            vec![1.0, 1.0, 2.0],
            vec![
                Entry { row: 0, col: 0, value: 1.0 },
                Entry { row: 0, col: 1, value: 1.0 },
                Entry { row: 1, col: 0, value: 2.0 },
                Entry { row: 1, col: 1, value: 2.0 },
                Entry { row: 1, col: 2, value: 4.0 },
            ],
            vec![1.5, 20.0],
            vec![Sense::Ge, Sense::Le],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, 5.0],
            vec![true, true, true],
        )
        .unwrap()
    }

    fn sample_of(inst: &MilpInstance) -> (BranchSample, LpResult) {
        let lp = solve_lp(inst, &[]).unwrap();
        let st = StaticFeatures::new(inst);
        let ages = AgeCounters::new(inst.num_vars(), inst.num_rows());
        let s = extract(inst, &st, &inst.lower, &inst.upper, &lp, &[0], &IncumbentState::default(), &ages, 0, lp.objective);
        (s, lp)
    }

    #[test]
    fn at_lower_bound_flags() {
        let inst = inst();
        let (s, lp) = sample_of(&inst);
        assert_eq!(lp.primal[2], 0.0);
        assert_eq!(s.var_features[2][7], 1.0);
        assert_eq!(s.var_features[2][8], 0.0);
        assert_eq!(s.var_features[2][10], 1.0);
    }

    #[test]
    fn fractional_part() {
        assert_eq!(fractionality(2.25), 0.25);
        assert_eq!(fractionality(-0.75), 0.25);
        assert_eq!(fractionality(3.0 - 1e-9), 0.0);
    }

    #[test]
    fn parallel_row_has_unit_cosine() {
        let inst = MilpInstance::new(
            "c",
            vec![1.0, 2.0],
            vec![Entry { row: 0, col: 0, value: 2.0 }, Entry { row: 0, col: 1, value: 4.0 }],
            vec![1.0],
            vec![Sense::Ge],
            vec![0.0; 2],
            vec![1.0; 2],
            vec![true; 2],
        )
        .unwrap();
        let st = StaticFeatures::new(&inst);
        assert!((st.cosine[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_hot_groups_and_ranges() {
        let inst = inst();
        let (s, _) = sample_of(&inst);
        for f in &s.var_features {
            assert_eq!(f[0..4].iter().sum::<f64>(), 1.0);
            assert_eq!(f[10..14].iter().sum::<f64>(), 1.0);
            assert!((0.0..1.0).contains(&f[9]));
            assert!(f.iter().all(|v| v.is_finite()));
        }
        for c in &s.cons_features {
            assert!((-1.0..=1.0).contains(&c[0]));
        }
        assert_eq!(s.candidates(), vec![0]);
    }

    #[test]
    fn extraction_is_pure() {
        let inst = inst();
        assert_eq!(sample_of(&inst).0, sample_of(&inst).0);
    }

    #[test]
    fn incumbent_mean_is_running_average() {
        let mut inc = IncumbentState::default();
        inc.accept(&[1.0, 0.0]);
        inc.accept(&[0.0, 0.0]);
        inc.accept(&[0.0, 1.0]);
        assert_eq!(inc.best.as_deref(), Some(&[0.0, 1.0][..]));
        assert!((inc.mean[0] - 1.0 / 3.0).abs() < 1e-15);
    }
}
