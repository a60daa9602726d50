#![allow(dead_code)]

pub mod fd_suite;

use milpbranch_core::features::{CONS_FEATURES, VAR_FEATURES};
use milpbranch_core::model::INSTANCE_VAR_FEATURES;
use milpbranch_learn::gnn::{GraphInput, SampleInput};
use milpbranch_learn::nn::{EdgeList, Mat, Prenorm};
use rand::Rng;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error of near-zero derivatives.
/// Central differences of an O(1) loss carry ~1e-10 of roundoff, so a
/// dead unit's exact zero reads as noise / FLOOR.
pub const FLOOR: f64 = 1e-5;

pub fn normal_mat(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

pub fn random_edges(nt: usize, ns: usize, rng: &mut impl Rng) -> EdgeList {
    let mut e = EdgeList::default();
    for t in 0..nt {
        for s in 0..ns {
            if rng.random_bool(0.5) {
                e.target.push(t);
                e.source.push(s);
                e.value.push(rng.sample(StandardNormal));
            }
        }
    }
    e
}

pub fn random_sample(rng: &mut impl Rng) -> (SampleInput, usize) {
    let n = rng.random_range(3..7);
    let m = rng.random_range(2..5);
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    mask[rng.random_range(0..n)] = true;
    let cands: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
    let target = cands[rng.random_range(0..cands.len())];
    let x = SampleInput {
        var: normal_mat(n, VAR_FEATURES, rng),
        cons: normal_mat(m, CONS_FEATURES, rng),
        edges: random_edges(m, n, rng),
        mask,
    };
    (x, target)
}

pub fn random_graph(rng: &mut impl Rng) -> GraphInput {
    let n = rng.random_range(3..7);
    let m = rng.random_range(2..5);
    GraphInput { var: normal_mat(n, INSTANCE_VAR_FEATURES, rng), cons: normal_mat(m, 1, rng), edges: random_edges(m, n, rng) }
}

pub fn random_prenorm(dim: usize, rng: &mut impl Rng) -> Prenorm {
    Prenorm {
        shift: (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        scale: (0..dim).map(|_| rng.random_range(0.5..2.0)).collect(),
    }
}

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
}

impl FdReport {
    pub fn assert_ok(&self, what: &str) {
        println!("{what}: {} checked, {} skipped at kinks, worst relative error {:.2e}", self.checked, self.skipped, self.worst);
        assert!(self.checked > 0, "{what}: nothing checked");
        assert!(self.worst <= REL_TOL, "{what}: worst relative error {:e}", self.worst);
        assert!(self.skipped * 50 <= self.checked, "{what}: {} of {} coordinates straddle a kink", self.skipped, self.checked);
    }

    pub fn merge(&mut self, other: FdReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.worst = self.worst.max(other.worst);
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Central differences of `f` at `theta` against `analytic`. `f` returns the
/// loss and a signature of its piecewise-linear branches; coordinates whose
/// +h and -h evaluations land on different branches are skipped.
pub fn check(theta: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> (f64, Vec<bool>)) -> FdReport {
    assert_eq!(theta.len(), analytic.len());
    let (_, base) = f(theta);
    let mut rep = FdReport::default();
    let mut t = theta.to_vec();
    for k in 0..theta.len() {
        t[k] = theta[k] + H;
        let (fp, sp) = f(&t);
        t[k] = theta[k] - H;
        let (fm, sm) = f(&t);
        t[k] = theta[k];
        if sp != base || sm != base {
            rep.skipped += 1;
            continue;
        }
        rep.checked += 1;
        rep.worst = rep.worst.max(rel_err(analytic[k], (fp - fm) / (2.0 * H)));
    }
    rep
}

/// Exhaustive optimum over the binary columns; continuous columns must be
/// fixed (`lower == upper`). `None` if infeasible.
pub fn brute_force(inst: &milpbranch_core::MilpInstance) -> Option<f64> {
    let n = inst.num_vars();
    let free: Vec<usize> = (0..n).filter(|&j| inst.lower[j] < inst.upper[j]).collect();
    for &j in &free {
        assert!(inst.integrality[j] && inst.lower[j] == 0.0 && inst.upper[j] == 1.0, "column {j} is not binary");
    }
    assert!(free.len() <= 16);
    let mut best: Option<f64> = None;
    let mut x = inst.lower.clone();
    for bits in 0u32..(1 << free.len()) {
        for (k, &j) in free.iter().enumerate() {
            x[j] = f64::from((bits >> k) & 1);
        }
        if inst.is_feasible(&x, 1e-9) {
            let v = inst.objective_value(&x);
            if best.is_none_or(|b| v < b) {
                best = Some(v);
            }
        }
    }
    best
}
