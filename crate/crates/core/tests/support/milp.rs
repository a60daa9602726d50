//! Exhaustive MILP oracles for tiny instances.

use milpbranch_core::model::MilpInstance;

/// Minimum over all 0/1 points of a pure binary program.
pub fn exhaustive_binary(inst: &MilpInstance) -> Option<(f64, Vec<f64>)> {
    let n = inst.num_vars();
    assert!(n <= 20, "too many variables for enumeration");
    assert!((0..n).all(|j| inst.integrality[j] && inst.lower[j] >= 0.0 && inst.upper[j] <= 1.0));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| f64::from((mask >> j) & 1)).collect();
        if !inst.is_feasible(&x, 0.0) {
            continue;
        }
        let v = inst.objective_value(&x);
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, x));
        }
    }
    best
}

/// Capacitated facility location oracle: enumerate open sets and solve each
/// transportation problem by successive shortest paths.
///
/// Expects the generator layout: `x_ij` at `i * nf + j`, `y_j` at
/// `nc * nf + j`; row `j` among the capacity rows holds `d_i` on `x_ij` and
/// `-cap_j` on `y_j`.
pub fn facility_oracle(inst: &MilpInstance, nf: usize, nc: usize) -> Option<f64> {
    let rows = inst.row_lists();
    let cap_rows = &rows[nc..nc + nf];
    let demand: Vec<f64> = (0..nc)
        .map(|i| cap_rows[0].iter().find(|&&(c, _)| c == i * nf).unwrap().1)
        .collect();
    let cap: Vec<f64> = (0..nf)
        .map(|j| -cap_rows[j].iter().find(|&&(c, _)| c == nc * nf + j).unwrap().1)
        .collect();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << nf) {
        let open: Vec<usize> = (0..nf).filter(|j| (mask >> j) & 1 == 1).collect();
        let fixed: f64 = open.iter().map(|&j| inst.objective[nc * nf + j]).sum();
        let unit = |i: usize, j: usize| inst.objective[i * nf + j] / demand[i];
        if let Some(flow_cost) = transportation(&demand, &open.iter().map(|&j| cap[j]).collect::<Vec<_>>(), |i, k| {
            unit(i, open[k])
        }) {
            let v = fixed + flow_cost;
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// Min-cost transportation of integral `supply_need` (customers) into
/// `capacity` (facilities); `None` when capacity is insufficient.
fn transportation(need: &[f64], capacity: &[f64], cost: impl Fn(usize, usize) -> f64) -> Option<f64> {
    let (nc, nf) = (need.len(), capacity.len());
    // Nodes: 0 source, 1..=nc customers, nc+1..=nc+nf facilities, last sink.
    let sink = nc + nf + 1;
    let nodes = sink + 1;
    let mut edges: Vec<(usize, usize, f64, f64)> = Vec::new(); // (from, to, cap, cost)
    let add = |edges: &mut Vec<(usize, usize, f64, f64)>, u, v, c, w| {
        edges.push((u, v, c, w));
        edges.push((v, u, 0.0, -w));
    };
    for i in 0..nc {
        add(&mut edges, 0, 1 + i, need[i], 0.0);
        for k in 0..nf {
            add(&mut edges, 1 + i, nc + 1 + k, f64::INFINITY, cost(i, k));
        }
    }
    for k in 0..nf {
        add(&mut edges, nc + 1 + k, sink, capacity[k], 0.0);
    }
    let total: f64 = need.iter().sum();
    let (mut sent, mut cost_sum) = (0.0, 0.0);
    while sent < total - 1e-9 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[0] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for (e, &(u, v, c, w)) in edges.iter().enumerate() {
                if c > 1e-12 && dist[u] + w < dist[v] - 1e-12 {
                    dist[v] = dist[u] + w;
                    via[v] = e;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[sink].is_finite() {
            return None;
        }
        let mut push = total - sent;
        let mut v = sink;
        while v != 0 {
            let e = via[v];
            push = push.min(edges[e].2);
            v = edges[e].0;
        }
        let mut v = sink;
        while v != 0 {
            let e = via[v];
            edges[e].2 -= push;
            edges[e ^ 1].2 += push;
            v = edges[e].0;
        }
        sent += push;
        cost_sum += push * dist[sink];
    }
    Some(cost_sum)
}
