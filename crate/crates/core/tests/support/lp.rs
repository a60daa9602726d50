//! Brute-force LP oracle: enumerate every vertex of a small boxed polytope.

use milpbranch_core::model::{Entry, MilpInstance, Sense};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_boxed_lp(rng: &mut ChaCha8Rng) -> MilpInstance {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=6);
    let objective = (0..n).map(|_| rng.random_range(-10..=10) as f64).collect();
    let mut entries = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random_bool(0.6) {
                let v = rng.random_range(-5..=5) as f64;
                if v != 0.0 {
                    entries.push(Entry { row: i, col: j, value: v });
                }
            }
        }
    }
    let rhs = (0..m).map(|_| rng.random_range(-8..=12) as f64).collect();
    let senses = (0..m)
        .map(|_| match rng.random_range(0..6) {
            0 => Sense::Eq,
            1 | 2 => Sense::Ge,
            _ => Sense::Le,
        })
        .collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-4..=1) as f64).collect();
    let upper = lower.iter().map(|l| l + rng.random_range(0..=6) as f64).collect();
    MilpInstance::new("rand", objective, entries, rhs, senses, lower, upper, vec![false; n]).unwrap()
}

/// Solves a dense square system by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(k: usize, n: usize, start: usize, cur: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
    if cur.len() == k {
        out(cur);
        return;
    }
    for i in start..n {
        cur.push(i);
        combinations(k, n, i + 1, cur, out);
        cur.pop();
    }
}

/// Minimum of `c'x` over all vertices of the polytope, `None` if empty.
pub fn vertex_enumeration(inst: &MilpInstance) -> Option<f64> {
    let n = inst.num_vars();
    let rows = inst.row_lists();
    // Hyperplanes: constraint rows, then x_j = l_j, then x_j = u_j.
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut a = vec![0.0; n];
        for &(j, v) in r {
            a[j] = v;
        }
        planes.push((a, inst.rhs[i]));
    }
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        planes.push((a.clone(), inst.lower[j]));
        planes.push((a, inst.upper[j]));
    }
    let mut best: Option<f64> = None;
    combinations(n, planes.len(), 0, &mut Vec::new(), &mut |idx| {
        let a = idx.iter().map(|&p| planes[p].0.clone()).collect();
        let b = idx.iter().map(|&p| planes[p].1).collect();
        if let Some(x) = solve_dense(a, b) {
            if inst.is_feasible(&x, 1e-9) {
                let v = inst.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    });
    best
}
