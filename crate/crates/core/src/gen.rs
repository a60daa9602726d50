//! Synthetic benchmark generators and D1..D6 distribution ladders.
//!
//! Every family is emitted as a minimization problem. Generation is a pure
//! function of the parameters and the seed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::model::{Entry, MilpInstance, ModelError, Sense};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    SetCovering,
    CombinatorialAuctions,
    FacilityLocation,
    MaxIndependentSet,
}

impl Family {
    pub const ALL: [Family; 4] =
        [Family::SetCovering, Family::CombinatorialAuctions, Family::FacilityLocation, Family::MaxIndependentSet];

    pub fn short_name(self) -> &'static str {
        match self {
            Family::SetCovering => "setcover",
            Family::CombinatorialAuctions => "cauctions",
            Family::FacilityLocation => "facilities",
            Family::MaxIndependentSet => "indset",
        }
    }

    pub fn from_name(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| {
            f.short_name() == s || serde_json::to_value(f).ok().and_then(|v| v.as_str().map(|t| t == s)) == Some(true)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetCoverParams {
    pub rows: usize,
    pub cols: usize,
    pub density: f64,
    pub max_cost: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionParams {
    pub items: usize,
    pub bids: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub value_deviation: f64,
    pub add_item_prob: f64,
    pub max_sub_bids: usize,
    pub additivity: f64,
    pub budget_factor: f64,
    pub resale_factor: f64,
}

impl AuctionParams {
    pub fn new(items: usize, bids: usize) -> Self {
        AuctionParams {
            items,
            bids,
            min_value: 1.0,
            max_value: 100.0,
            value_deviation: 0.5,
            add_item_prob: 0.9,
            max_sub_bids: 5,
            additivity: 0.2,
            budget_factor: 1.5,
            resale_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacilityParams {
    pub facilities: usize,
    pub customers: usize,
    /// Total capacity / total demand before integer truncation.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependentSetParams {
    pub nodes: usize,
    pub affinity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilyParams {
    SetCovering(SetCoverParams),
    CombinatorialAuctions(AuctionParams),
    FacilityLocation(FacilityParams),
    MaxIndependentSet(IndependentSetParams),
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::SetCovering(_) => Family::SetCovering,
            FamilyParams::CombinatorialAuctions(_) => Family::CombinatorialAuctions,
            FamilyParams::FacilityLocation(_) => Family::FacilityLocation,
            FamilyParams::MaxIndependentSet(_) => Family::MaxIndependentSet,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidSpec(m));
        match *self {
            FamilyParams::SetCovering(p) => {
                if p.rows == 0 || p.cols < 2 || p.max_cost == 0 {
                    return bad(format!("set covering needs rows >= 1, cols >= 2, max_cost >= 1, got {p:?}"));
                }
                if !(p.density > 0.0 && p.density <= 1.0) || p.density * (p.cols as f64) < 1.0 {
                    return bad(format!("density must lie in (0, 1] with density * cols >= 1, got {}", p.density));
                }
            }
            FamilyParams::CombinatorialAuctions(p) => {
                if p.items < 2 || p.bids < p.items {
                    return bad(format!("auctions need bids >= items >= 2, got items {} bids {}", p.items, p.bids));
                }
                if !(0.0..=1.0).contains(&p.add_item_prob) || p.max_value < p.min_value {
                    return bad(format!("bad auction value parameters {p:?}"));
                }
            }
            FamilyParams::FacilityLocation(p) => {
                if p.facilities == 0 || p.customers == 0 || !(p.ratio > 0.0 && p.ratio.is_finite()) {
                    return bad(format!("facility location needs positive sizes and ratio, got {p:?}"));
                }
            }
            FamilyParams::MaxIndependentSet(p) => {
                if p.nodes == 0 || p.nodes <= p.affinity {
                    return bad(format!("independent set needs nodes > affinity, got {p:?}"));
                }
            }
        }
        Ok(())
    }

    /// Applies a scale multiplier to the family's growth dimension(s).
    pub fn scaled(&self, m: f64) -> FamilyParams {
        let s = |v: usize| ((v as f64) * m).round().max(1.0) as usize;
        match *self {
            FamilyParams::SetCovering(p) => FamilyParams::SetCovering(SetCoverParams { rows: s(p.rows), ..p }),
            FamilyParams::CombinatorialAuctions(p) => {
                FamilyParams::CombinatorialAuctions(AuctionParams { items: s(p.items), bids: s(p.bids), ..p })
            }
            FamilyParams::FacilityLocation(p) => {
                FamilyParams::FacilityLocation(FacilityParams { facilities: s(p.facilities), ..p })
            }
            FamilyParams::MaxIndependentSet(p) => {
                FamilyParams::MaxIndependentSet(IndependentSetParams { nodes: s(p.nodes), ..p })
            }
        }
    }

    fn label(&self) -> String {
        match self {
            FamilyParams::SetCovering(p) => format!("setcover-r{}-c{}-d{}", p.rows, p.cols, p.density),
            FamilyParams::CombinatorialAuctions(p) => format!("cauctions-i{}-b{}", p.items, p.bids),
            FamilyParams::FacilityLocation(p) => format!("facilities-f{}-c{}", p.facilities, p.customers),
            FamilyParams::MaxIndependentSet(p) => format!("indset-n{}-a{}", p.nodes, p.affinity),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub params: FamilyParams,
    pub seed: u64,
}

pub fn generate(spec: &GenSpec) -> Result<MilpInstance, GenError> {
    spec.params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let inst = match spec.params {
        FamilyParams::SetCovering(p) => set_covering(&p, &mut rng)?,
        FamilyParams::CombinatorialAuctions(p) => auction(&p, &mut rng)?,
        FamilyParams::FacilityLocation(p) => facility_location(&p, &mut rng)?,
        FamilyParams::MaxIndependentSet(p) => independent_set(&p, &mut rng)?,
    };
    let mut inst = inst.with_provenance(serde_json::to_string(spec)?);
    inst.name = format!("{}-s{}", spec.params.label(), spec.seed);
    Ok(inst)
}

pub fn gen_set_covering(rows: usize, cols: usize, density: f64, seed: u64) -> Result<MilpInstance, GenError> {
    generate(&GenSpec { params: FamilyParams::SetCovering(SetCoverParams { rows, cols, density, max_cost: 100 }), seed })
}

pub fn gen_comb_auction(items: usize, bids: usize, seed: u64) -> Result<MilpInstance, GenError> {
    generate(&GenSpec { params: FamilyParams::CombinatorialAuctions(AuctionParams::new(items, bids)), seed })
}

pub fn gen_facility_location(facilities: usize, customers: usize, seed: u64) -> Result<MilpInstance, GenError> {
    generate(&GenSpec {
        params: FamilyParams::FacilityLocation(FacilityParams { facilities, customers, ratio: 5.0 }),
        seed,
    })
}

pub fn gen_max_independent_set(nodes: usize, affinity: usize, seed: u64) -> Result<MilpInstance, GenError> {
    generate(&GenSpec { params: FamilyParams::MaxIndependentSet(IndependentSetParams { nodes, affinity }), seed })
}

fn rows_to_instance(
    objective: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, Sense, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    integrality: Vec<bool>,
) -> Result<MilpInstance, GenError> {
    let mut entries = Vec::new();
    let (mut rhs, mut senses) = (Vec::new(), Vec::new());
    for (i, (coefs, sense, b)) in rows.into_iter().enumerate() {
        for (col, value) in coefs {
            entries.push(Entry { row: i, col, value });
        }
        rhs.push(b);
        senses.push(sense);
    }
    Ok(MilpInstance::new("", objective, entries, rhs, senses, lower, upper, integrality)?)
}

fn set_covering(p: &SetCoverParams, rng: &mut ChaCha8Rng) -> Result<MilpInstance, GenError> {
    let mut rows: Vec<BTreeSet<usize>> = (0..p.rows)
        .map(|_| (0..p.cols).filter(|_| rng.random_bool(p.density)).collect())
        .collect();
    // Repair: at least two columns per row, every column in some row.
    for r in rows.iter_mut() {
        while r.len() < 2 {
            r.insert(rng.random_range(0..p.cols));
        }
    }
    let mut used = vec![false; p.cols];
    for r in &rows {
        for &j in r {
            used[j] = true;
        }
    }
    for (j, _) in used.iter().enumerate().filter(|(_, u)| !**u) {
        let i = rng.random_range(0..p.rows);
        rows[i].insert(j);
    }
    let objective = (0..p.cols).map(|_| f64::from(rng.random_range(1..=p.max_cost))).collect();
    let rows = rows
        .into_iter()
        .map(|r| (r.into_iter().map(|j| (j, 1.0)).collect(), Sense::Ge, 1.0))
        .collect();
    rows_to_instance(objective, rows, vec![0.0; p.cols], vec![1.0; p.cols], vec![true; p.cols])
}

fn weighted(rng: &mut ChaCha8Rng, w: &[f64]) -> Option<usize> {
    WeightedIndex::new(w).ok().map(|d| d.sample(rng))
}

fn auction(p: &AuctionParams, rng: &mut ChaCha8Rng) -> Result<MilpInstance, GenError> {
    let n = p.items;
    let values: Vec<f64> = (0..n).map(|_| p.min_value + (p.max_value - p.min_value) * rng.random::<f64>()).collect();
    let mut compat = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rng.random();
            compat[i][j] = v;
            compat[j][i] = v;
        }
    }
    for row in compat.iter_mut() {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    let bundle_price = |bundle: &[usize], private: &[f64]| {
        bundle.iter().map(|&i| private[i]).sum::<f64>() + (bundle.len() as f64).powf(1.0 + p.additivity)
    };
    let next_item = |mask: &[bool], interests: &[f64], rng: &mut ChaCha8Rng| -> Option<usize> {
        let k = mask.iter().filter(|b| **b).count() as f64;
        let w: Vec<f64> = (0..n)
            .map(|j| {
                if mask[j] {
                    0.0
                } else {
                    let c: f64 = (0..n).filter(|&i| mask[i]).map(|i| compat[i][j]).sum::<f64>() / k;
                    interests[j] * c
                }
            })
            .collect();
        weighted(rng, &w).or_else(|| {
            let free: Vec<usize> = (0..n).filter(|&j| !mask[j]).collect();
            (!free.is_empty()).then(|| free[rng.random_range(0..free.len())])
        })
    };

    let mut bids: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut dummies = 0usize;
    while bids.len() < p.bids {
        let interests: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let private: Vec<f64> =
            (0..n).map(|i| values[i] + p.max_value * p.value_deviation * (2.0 * interests[i] - 1.0)).collect();
        let first = weighted(rng, &interests).unwrap_or(0);
        let mut mask = vec![false; n];
        mask[first] = true;
        let mut size = 1;
        while rng.random::<f64>() < p.add_item_prob && size < n {
            match next_item(&mask, &interests, rng) {
                Some(j) => {
                    mask[j] = true;
                    size += 1;
                }
                None => break,
            }
        }
        let bundle: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
        let price = bundle_price(&bundle, &private);
        if price < 0.0 {
            continue;
        }
        let mut bidder: Vec<(Vec<usize>, f64)> = vec![(bundle.clone(), price)];
        let mut subs = Vec::new();
        for &item in &bundle {
            let mut m = vec![false; n];
            m[item] = true;
            let mut k = 1;
            while k < bundle.len() {
                match next_item(&m, &interests, rng) {
                    Some(j) => {
                        m[j] = true;
                        k += 1;
                    }
                    None => break,
                }
            }
            let sub: Vec<usize> = (0..n).filter(|&j| m[j]).collect();
            let sp = bundle_price(&sub, &private);
            subs.push((sub, sp));
        }
        subs.sort_by(|a, b| b.1.total_cmp(&a.1));
        let budget = p.budget_factor * price;
        let min_resale = p.resale_factor * bundle.iter().map(|&i| values[i]).sum::<f64>();
        for (sub, sp) in subs {
            if bidder.len() > p.max_sub_bids || bids.len() + bidder.len() >= p.bids {
                break;
            }
            if sp < 0.0 || sp > budget || sub.iter().map(|&i| values[i]).sum::<f64>() < min_resale {
                continue;
            }
            if bidder.iter().any(|(b, _)| *b == sub) {
                continue;
            }
            bidder.push((sub, sp));
        }
        // Exclusive-or among a bidder's bids through a dummy item.
        let dummy = if bidder.len() > 2 {
            dummies += 1;
            Some(n + dummies - 1)
        } else {
            None
        };
        for (mut b, pr) in bidder {
            b.extend(dummy);
            bids.push((b, pr));
        }
    }
    let mut item_rows: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (k, (bundle, _)) in bids.iter().enumerate() {
        for &i in bundle {
            item_rows.entry(i).or_default().push((k, 1.0));
        }
    }
    let objective = bids.iter().map(|b| -b.1).collect();
    let rows = item_rows.into_values().map(|r| (r, Sense::Le, 1.0)).collect();
    let nb = bids.len();
    rows_to_instance(objective, rows, vec![0.0; nb], vec![1.0; nb], vec![true; nb])
}

fn facility_location(p: &FacilityParams, rng: &mut ChaCha8Rng) -> Result<MilpInstance, GenError> {
    let (nf, nc) = (p.facilities, p.customers);
    let cx: Vec<f64> = (0..nc).map(|_| rng.random()).collect();
    let cy: Vec<f64> = (0..nc).map(|_| rng.random()).collect();
    let fx: Vec<f64> = (0..nf).map(|_| rng.random()).collect();
    let fy: Vec<f64> = (0..nf).map(|_| rng.random()).collect();
    let demand: Vec<f64> = (0..nc).map(|_| f64::from(rng.random_range(5..=35u32))).collect();
    let raw_cap: Vec<f64> = (0..nf).map(|_| f64::from(rng.random_range(10..=160u32))).collect();
    let fixed: Vec<f64> = raw_cap
        .iter()
        .map(|c| (f64::from(rng.random_range(100..=110u32)) * c.sqrt() + f64::from(rng.random_range(0..=90u32))).floor())
        .collect();
    let total_demand: f64 = demand.iter().sum();
    let total_raw: f64 = raw_cap.iter().sum();
    let cap: Vec<f64> = raw_cap.iter().map(|c| (c * p.ratio * total_demand / total_raw).floor()).collect();

    // Columns: x_ij at i * nf + j, then y_j at nc * nf + j.
    let x = |i: usize, j: usize| i * nf + j;
    let y = |j: usize| nc * nf + j;
    let nvars = nc * nf + nf;
    let mut objective = vec![0.0; nvars];
    for i in 0..nc {
        for j in 0..nf {
            let d = ((cx[i] - fx[j]).powi(2) + (cy[i] - fy[j]).powi(2)).sqrt();
            objective[x(i, j)] = 10.0 * d * demand[i];
        }
    }
    for j in 0..nf {
        objective[y(j)] = fixed[j];
    }
    let mut rows = Vec::new();
    for i in 0..nc {
        rows.push(((0..nf).map(|j| (x(i, j), 1.0)).collect(), Sense::Ge, 1.0));
    }
    for j in 0..nf {
        let mut r: Vec<(usize, f64)> = (0..nc).map(|i| (x(i, j), demand[i])).collect();
        r.push((y(j), -cap[j]));
        rows.push((r, Sense::Le, 0.0));
    }
    rows.push(((0..nf).map(|j| (y(j), cap[j])).collect(), Sense::Ge, total_demand));
    for i in 0..nc {
        for j in 0..nf {
            rows.push((vec![(x(i, j), 1.0), (y(j), -1.0)], Sense::Le, 0.0));
        }
    }
    let integrality = (0..nvars).map(|k| k >= nc * nf).collect();
    rows_to_instance(objective, rows, vec![0.0; nvars], vec![1.0; nvars], integrality)
}

/// Preferential-attachment graph: an initial clique on `affinity + 1`
/// nodes, then each new node links to `affinity` distinct existing nodes
/// with probability proportional to degree.
pub fn barabasi_albert(nodes: usize, affinity: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    let mut degree = vec![0.0f64; nodes];
    if affinity == 0 {
        return edges;
    }
    let core = (affinity + 1).min(nodes);
    for i in 0..core {
        for j in i + 1..core {
            edges.push((i, j));
            degree[i] += 1.0;
            degree[j] += 1.0;
        }
    }
    for v in core..nodes {
        let mut w = degree[..v].to_vec();
        let mut picked = Vec::with_capacity(affinity);
        for _ in 0..affinity {
            let Some(u) = weighted(rng, &w) else { break };
            w[u] = 0.0;
            picked.push(u);
        }
        for u in picked {
            edges.push((u, v));
            degree[u] += 1.0;
            degree[v] += 1.0;
        }
    }
    edges
}

/// Greedy clique partition: highest-degree node first, grown with its
/// densest compatible neighbours.
pub fn greedy_clique_partition(nodes: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![HashSet::new(); nodes];
    for &(u, v) in edges {
        adj[u].insert(v);
        adj[v].insert(u);
    }
    let deg = |v: usize| adj[v].len();
    let mut order: Vec<usize> = (0..nodes).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(deg(v)), v));
    let mut assigned = vec![false; nodes];
    let mut cliques = Vec::new();
    for &c in &order {
        if assigned[c] {
            continue;
        }
        assigned[c] = true;
        let mut clique = vec![c];
        let mut nbrs: Vec<usize> = adj[c].iter().copied().filter(|&u| !assigned[u]).collect();
        nbrs.sort_by_key(|&u| (std::cmp::Reverse(deg(u)), u));
        for u in nbrs {
            if clique.iter().all(|&w| adj[w].contains(&u)) {
                assigned[u] = true;
                clique.push(u);
            }
        }
        clique.sort_unstable();
        cliques.push(clique);
    }
    cliques
}

fn independent_set(p: &IndependentSetParams, rng: &mut ChaCha8Rng) -> Result<MilpInstance, GenError> {
    let edges = barabasi_albert(p.nodes, p.affinity, rng);
    let cliques = greedy_clique_partition(p.nodes, &edges);
    let mut clique_of = vec![0usize; p.nodes];
    let mut rows = Vec::new();
    for (k, c) in cliques.iter().enumerate() {
        for &v in c {
            clique_of[v] = k;
        }
        if c.len() > 1 {
            rows.push((c.iter().map(|&v| (v, 1.0)).collect(), Sense::Le, 1.0));
        }
    }
    let mut sorted: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    sorted.sort_unstable();
    for (u, v) in sorted {
        if clique_of[u] != clique_of[v] {
            rows.push((vec![(u, 1.0), (v, 1.0)], Sense::Le, 1.0));
        }
    }
    rows_to_instance(vec![-1.0; p.nodes], rows, vec![0.0; p.nodes], vec![1.0; p.nodes], vec![true; p.nodes])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Original benchmark sizes.
    Paper,
    /// Scaled-down sizes that solve in seconds.
    Desk,
    /// At most eight integer variables; for exhaustive checks.
    Tiny,
}

pub const PAPER_MULTIPLIERS: [[f64; 6]; 4] = [
    [1.0, 2.0, 4.0, 6.0, 8.0, 16.0],
    [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
    [1.0, 2.0, 4.0, 6.0, 8.0, 16.0],
    [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
];

fn family_index(f: Family) -> usize {
    Family::ALL.iter().position(|&g| g == f).unwrap()
}

/// D1 parameters of a family under a preset.
pub fn base_params(family: Family, preset: Preset) -> FamilyParams {
    match (family, preset) {
        (Family::SetCovering, Preset::Paper) => {
            FamilyParams::SetCovering(SetCoverParams { rows: 500, cols: 1000, density: 0.05, max_cost: 100 })
        }
        (Family::SetCovering, Preset::Desk) => {
            FamilyParams::SetCovering(SetCoverParams { rows: 40, cols: 80, density: 0.2, max_cost: 100 })
        }
        (Family::SetCovering, Preset::Tiny) => {
            FamilyParams::SetCovering(SetCoverParams { rows: 6, cols: 8, density: 0.3, max_cost: 100 })
        }
        (Family::CombinatorialAuctions, Preset::Paper) => FamilyParams::CombinatorialAuctions(AuctionParams::new(100, 500)),
        (Family::CombinatorialAuctions, Preset::Desk) => FamilyParams::CombinatorialAuctions(AuctionParams::new(10, 50)),
        (Family::CombinatorialAuctions, Preset::Tiny) => FamilyParams::CombinatorialAuctions(AuctionParams::new(4, 8)),
        (Family::FacilityLocation, Preset::Paper) => {
            FamilyParams::FacilityLocation(FacilityParams { facilities: 100, customers: 100, ratio: 5.0 })
        }
        (Family::FacilityLocation, Preset::Desk) => {
            FamilyParams::FacilityLocation(FacilityParams { facilities: 5, customers: 5, ratio: 5.0 })
        }
        (Family::FacilityLocation, Preset::Tiny) => {
            FamilyParams::FacilityLocation(FacilityParams { facilities: 4, customers: 3, ratio: 5.0 })
        }
        (Family::MaxIndependentSet, Preset::Paper) => {
            FamilyParams::MaxIndependentSet(IndependentSetParams { nodes: 500, affinity: 4 })
        }
        (Family::MaxIndependentSet, Preset::Desk) => {
            FamilyParams::MaxIndependentSet(IndependentSetParams { nodes: 50, affinity: 4 })
        }
        (Family::MaxIndependentSet, Preset::Tiny) => {
            FamilyParams::MaxIndependentSet(IndependentSetParams { nodes: 8, affinity: 2 })
        }
    }
}

/// Scales `base` by each multiplier; multipliers must be nondecreasing.
pub fn gen_ladder(base: &FamilyParams, multipliers: &[f64]) -> Result<Vec<FamilyParams>, GenError> {
    if multipliers.windows(2).any(|w| w[1] < w[0]) || multipliers.iter().any(|m| !(*m > 0.0)) {
        return Err(GenError::InvalidSpec(format!("multipliers must be positive and nondecreasing: {multipliers:?}")));
    }
    let out: Vec<FamilyParams> = multipliers.iter().map(|&m| base.scaled(m)).collect();
    for p in &out {
        p.validate()?;
    }
    Ok(out)
}

/// D1..D6 for a family. The tiny preset does not grow.
pub fn ladder(family: Family, preset: Preset) -> Vec<FamilyParams> {
    let base = base_params(family, preset);
    match preset {
        Preset::Tiny => vec![base; 6],
        _ => gen_ladder(&base, &PAPER_MULTIPLIERS[family_index(family)]).expect("built-in ladders are valid"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub distribution: String,
    pub spec: GenSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn read(dir: impl AsRef<Path>) -> Result<Manifest, GenError> {
        let text = std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE)).map_err(IoError::from)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), GenError> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(dir.as_ref().join(MANIFEST_FILE), text).map_err(IoError::from)?;
        Ok(())
    }

    pub fn distribution<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a ManifestEntry> {
        self.entries.iter().filter(move |e| e.distribution == name)
    }
}

/// Generates `count` instances with seeds `seed, seed + 1, ...`, writes them
/// under `dir` and appends them to `manifest`.
pub fn write_batch(
    params: &FamilyParams,
    distribution: &str,
    count: usize,
    seed: u64,
    dir: impl AsRef<Path>,
    manifest: &mut Manifest,
) -> Result<Vec<MilpInstance>, GenError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(IoError::from)?;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let spec = GenSpec { params: *params, seed: seed + k as u64 };
        let inst = generate(&spec)?;
        let file = format!("{}-{}-{:05}.milp", params.family().short_name(), distribution, k);
        io::write_instance(&inst, dir.join(&file))?;
        manifest.entries.push(ManifestEntry { file, distribution: distribution.to_string(), spec });
        out.push(inst);
    }
    Ok(out)
}

/// Fisher-Yates shuffle helper used by callers that split datasets.
pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_cover_shape() {
        let inst = gen_set_covering(20, 40, 0.2, 3).unwrap();
        assert_eq!(inst.num_rows(), 20);
        assert_eq!(inst.num_vars(), 40);
        assert!(inst.rhs.iter().all(|&b| b == 1.0));
        assert!(inst.senses.iter().all(|&s| s == Sense::Ge));
        assert!(inst.is_feasible(&vec![1.0; 40], 0.0));
        let rows = inst.row_lists();
        assert!(rows.iter().all(|r| r.len() >= 2));
        let cols = inst.col_lists();
        assert!(cols.iter().all(|c| !c.is_empty()));
        assert!(inst.objective.iter().all(|&c| (1.0..=100.0).contains(&c) && c.fract() == 0.0));
    }

    #[test]
    fn generation_is_deterministic() {
        for f in Family::ALL {
            let spec = GenSpec { params: base_params(f, Preset::Desk), seed: 11 };
            let a = io::to_string(&generate(&spec).unwrap());
            let b = io::to_string(&generate(&spec).unwrap());
            assert_eq!(a, b);
            let c = io::to_string(&generate(&GenSpec { seed: 12, ..spec }).unwrap());
            assert_ne!(a, c);
        }
    }

    #[test]
    fn auction_has_requested_bids() {
        let inst = gen_comb_auction(10, 50, 1).unwrap();
        assert_eq!(inst.num_vars(), 50);
        assert!(inst.objective.iter().all(|&c| c <= 0.0));
        assert!(inst.is_feasible(&vec![0.0; 50], 0.0));
    }

    #[test]
    fn triangle_partition_is_one_clique() {
        assert_eq!(greedy_clique_partition(3, &[(0, 1), (1, 2), (0, 2)]), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn ba_graph_degree_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = barabasi_albert(30, 4, &mut rng);
        assert_eq!(e.len(), 10 + 4 * 25);
        let set: HashSet<(usize, usize)> = e.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        assert_eq!(set.len(), e.len());
    }

    #[test]
    fn paper_and_desk_ladders() {
        let rows = |p: &FamilyParams| match p {
            FamilyParams::SetCovering(s) => s.rows,
            _ => unreachable!(),
        };
        let paper: Vec<usize> = ladder(Family::SetCovering, Preset::Paper).iter().map(rows).collect();
        assert_eq!(paper, vec![500, 1000, 2000, 3000, 4000, 8000]);
        let desk: Vec<usize> = ladder(Family::SetCovering, Preset::Desk).iter().map(rows).collect();
        assert_eq!(desk, vec![40, 80, 160, 240, 320, 640]);
        assert!(gen_ladder(&base_params(Family::SetCovering, Preset::Desk), &[2.0, 1.0]).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(gen_set_covering(10, 10, 0.05, 0).is_err());
        assert!(gen_comb_auction(5, 4, 0).is_err());
        assert!(gen_max_independent_set(4, 4, 0).is_err());
    }
}
