//! The adversarial instance augmenter: masking operators, a contextual
//! bandit policy over instance graphs trained with PPO (or REINFORCE), a
//! value baseline and a discriminator that gates augmented instances.

use std::collections::VecDeque;
use std::sync::Arc;

use milpbranch_core::gen::Family;
use milpbranch_core::lp::{solve_lp, LpStatus};
use milpbranch_core::model::{from_instance_graph, masked_fix_value, to_instance_graph, InstanceGraph};
use milpbranch_core::MilpInstance;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gnn::{EncoderCache, GraphEncoder, GraphInput, GraphScorer};
use crate::nn::{log_sigmoid, sigmoid, Adam, Checkpoint, Grads, Linear, Mat, NnError, ParamId, ParamSet, CHECKPOINT_FORMAT};

/// Fraction of variables, constraints and edges to mask.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Proportions {
    pub vars: f64,
    pub cons: f64,
    pub edges: f64,
}

pub const MAX_PROPORTION: f64 = 0.05;

impl Proportions {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.vars == 0.0 && self.cons == 0.0 && self.edges == 0.0
    }

    /// Default operators and proportions for each benchmark family.
    pub fn for_family(family: Family) -> Self {
        match family {
            Family::SetCovering => Proportions { vars: 0.0, cons: 0.03, edges: 0.01 },
            Family::CombinatorialAuctions => Proportions { vars: 0.01, cons: 0.0, edges: 0.0 },
            Family::FacilityLocation => Proportions { vars: 0.01, cons: 0.01, edges: 0.0 },
            Family::MaxIndependentSet => Proportions { vars: 0.0, cons: 0.05, edges: 0.01 },
        }
    }

    pub fn counts(&self, vars: usize, cons: usize, edges: usize) -> (usize, usize, usize) {
        (top_k_count(self.vars, vars), top_k_count(self.cons, cons), top_k_count(self.edges, edges))
    }
}

/// `floor(p * n)`, robust to representation error in `p`.
pub fn top_k_count(p: f64, n: usize) -> usize {
    ((p * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Indices (into the instance graph's node and edge lists) to mask, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AugAction {
    pub vars: Vec<usize>,
    pub cons: Vec<usize>,
    pub edges: Vec<usize>,
}

impl AugAction {
    pub fn is_empty(&self) -> bool {
        self.vars.is_empty() && self.cons.is_empty() && self.edges.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Rejection {
    #[error("no integer variable left")]
    NoIntegerVarLeft,
    #[error("LP relaxation infeasible")]
    LpInfeasible,
    #[error("LP relaxation unbounded")]
    LpUnbounded,
    #[error("masked variable {0} has no finite bound")]
    FreeVariableMask(usize),
    #[error("mask index out of range")]
    OutOfRange,
}

/// Deletes masked constraints, zeroes masked edges and fixes masked
/// variables at a finite bound, then checks the result is still a usable
/// MILP.
pub fn apply_mask(inst: &MilpInstance, a: &AugAction) -> Result<MilpInstance, Rejection> {
    let mut g = to_instance_graph(inst);
    if a.vars.iter().any(|&j| j >= g.num_vars()) || a.cons.iter().any(|&i| i >= g.num_cons()) || a.edges.iter().any(|&e| e >= g.edges.len()) {
        return Err(Rejection::OutOfRange);
    }
    for &j in &a.vars {
        if masked_fix_value(inst.lower[j], inst.upper[j]).is_none() {
            return Err(Rejection::FreeVariableMask(j));
        }
    }
    g.remove_edges(&a.edges);
    g.remove_cons(&a.cons);
    g.remove_vars(&a.vars);
    let out = from_instance_graph(&g).map_err(|_| Rejection::OutOfRange)?;
    validate(&out)?;
    Ok(out)
}

pub fn validate(inst: &MilpInstance) -> Result<(), Rejection> {
    if inst.num_integer() == 0 {
        return Err(Rejection::NoIntegerVarLeft);
    }
    match solve_lp(inst, &[]) {
        Ok(r) if r.status == LpStatus::Infeasible => Err(Rejection::LpInfeasible),
        Ok(r) if r.status == LpStatus::Unbounded => Err(Rejection::LpUnbounded),
        Ok(_) => Ok(()),
        Err(_) => Err(Rejection::LpInfeasible),
    }
}

/// Uniform random mask sets of the same sizes the augmenter would choose.
pub fn random_action(g: &InstanceGraph, props: &Proportions, rng: &mut impl Rng) -> AugAction {
    let (kv, kc, ke) = props.counts(g.num_vars(), g.num_cons(), g.edges.len());
    let mut pick = |n: usize, k: usize| {
        let mut v = index::sample(rng, n, k).into_vec();
        v.sort_unstable();
        v
    };
    AugAction { vars: pick(g.num_vars(), kv), cons: pick(g.num_cons(), kc), edges: pick(g.edges.len(), ke) }
}

/// Random augmentation baseline.
pub fn random_augment(inst: &MilpInstance, props: &Proportions, seed: u64) -> Result<(MilpInstance, AugAction), Rejection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_action(&to_instance_graph(inst), props, &mut rng);
    Ok((apply_mask(inst, &a)?, a))
}

/// Per-element masking logits.
#[derive(Debug, Clone)]
pub struct MaskLogits {
    pub vars: Vec<f64>,
    pub cons: Vec<f64>,
    pub edges: Vec<f64>,
    cache: AugCache,
}

#[derive(Debug, Clone)]
struct AugCache {
    enc: EncoderCache,
    h_var: Mat,
    h_cons: Mat,
    edge_var: Vec<usize>,
    edge_cons: Vec<usize>,
}

impl MaskLogits {
    pub fn signature(&self) -> Vec<bool> {
        let mut out = Vec::new();
        self.cache.enc.signature(&mut out);
        out
    }

    /// (logits, selected) pairs of the categories with a positive proportion.
    fn active<'a>(&'a self, props: &Proportions, a: &'a AugAction) -> Vec<(&'a [f64], Vec<bool>)> {
        let mut out = Vec::new();
        let mark = |n: usize, idx: &[usize]| {
            let mut m = vec![false; n];
            idx.iter().for_each(|&k| m[k] = true);
            m
        };
        if props.vars > 0.0 {
            out.push((self.vars.as_slice(), mark(self.vars.len(), &a.vars)));
        }
        if props.cons > 0.0 {
            out.push((self.cons.as_slice(), mark(self.cons.len(), &a.cons)));
        }
        if props.edges > 0.0 {
            out.push((self.edges.as_slice(), mark(self.edges.len(), &a.edges)));
        }
        out
    }

    /// Independent-Bernoulli log-likelihood of `a` over the active categories.
    pub fn log_prob(&self, props: &Proportions, a: &AugAction) -> f64 {
        self.active(props, a)
            .iter()
            .flat_map(|(z, sel)| z.iter().zip(sel).map(|(&z, &s)| if s { log_sigmoid(z) } else { log_sigmoid(-z) }))
            .sum()
    }

    /// Mean Bernoulli entropy over the active elements.
    pub fn entropy(&self, props: &Proportions) -> f64 {
        let empty = AugAction::default();
        let act = self.active(props, &empty);
        let n: usize = act.iter().map(|(z, _)| z.len()).sum();
        if n == 0 {
            return 0.0;
        }
        act.iter().flat_map(|(z, _)| z.iter().map(|&z| bernoulli_entropy(z))).sum::<f64>() / n as f64
    }

    /// `coef_logp * dlogp/dz + coef_ent * dH/dz` for every element, in the
    /// layout `(vars, cons, edges)`; inactive categories get zeros.
    fn logit_grads(&self, props: &Proportions, a: &AugAction, coef_logp: f64, coef_ent: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n_active: usize = [(props.vars, self.vars.len()), (props.cons, self.cons.len()), (props.edges, self.edges.len())]
            .iter()
            .filter(|(p, _)| *p > 0.0)
            .map(|(_, n)| n)
            .sum();
        let grad = |p: f64, z: &[f64], idx: &[usize]| {
            if p <= 0.0 {
                return vec![0.0; z.len()];
            }
            let mut sel = vec![false; z.len()];
            idx.iter().for_each(|&k| sel[k] = true);
            z.iter()
                .zip(&sel)
                .map(|(&z, &s)| {
                    let q = sigmoid(z);
                    let dlogp = f64::from(u8::from(s)) - q;
                    let dent = -z * q * (1.0 - q) / n_active as f64;
                    coef_logp * dlogp + coef_ent * dent
                })
                .collect()
        };
        (grad(props.vars, &self.vars, &a.vars), grad(props.cons, &self.cons, &a.cons), grad(props.edges, &self.edges, &a.edges))
    }
}

pub fn bernoulli_entropy(z: f64) -> f64 {
    let q = sigmoid(z);
    -(q * log_sigmoid(z) + (1.0 - q) * log_sigmoid(-z))
}

/// Top-`k` indices of `scores`, ties to the lower index, returned sorted.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn gumbel(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

pub const AUGMENTER_KIND: &str = "augmenter";

/// Shared graph encoder with single-layer sigmoid heads for variables,
/// constraints and edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmenter {
    pub params: ParamSet,
    pub encoder: GraphEncoder,
    head_var: Linear,
    head_cons: Linear,
    head_edge_var: ParamId,
    head_edge_cons: ParamId,
    head_edge_b: ParamId,
    pub hidden: usize,
    pub seed: u64,
}

impl Augmenter {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let encoder = GraphEncoder::new(&mut ps, "encoder", hidden, &mut rng);
        let head_var = Linear::new(&mut ps, "head_var", hidden, 1, 1.0, &mut rng);
        let head_cons = Linear::new(&mut ps, "head_cons", hidden, 1, 1.0, &mut rng);
        let we = crate::nn::orthogonal(2 * hidden, 1, 1.0, &mut rng);
        let head_edge_var = ps.add("head_edge.w_var", we.slice(ndarray::s![..hidden, ..]).to_owned());
        let head_edge_cons = ps.add("head_edge.w_cons", we.slice(ndarray::s![hidden.., ..]).to_owned());
        let head_edge_b = ps.add("head_edge.b", Mat::zeros((1, 1)));
        Augmenter { params: ps, encoder, head_var, head_cons, head_edge_var, head_edge_cons, head_edge_b, hidden, seed }
    }

    pub fn logits(&self, x: &GraphInput) -> Result<MaskLogits, NnError> {
        let ps = &self.params;
        let enc = self.encoder.forward(ps, x)?;
        let zv = self.head_var.forward(ps, &enc.h_var);
        let zc = self.head_cons.forward(ps, &enc.h_cons);
        let u = enc.h_var.dot(ps.get(self.head_edge_var));
        let w = enc.h_cons.dot(ps.get(self.head_edge_cons));
        let b = ps.get(self.head_edge_b)[(0, 0)];
        let edges = x.edges.source.iter().zip(&x.edges.target).map(|(&j, &i)| u[(j, 0)] + w[(i, 0)] + b).collect();
        Ok(MaskLogits {
            vars: zv.column(0).to_vec(),
            cons: zc.column(0).to_vec(),
            edges,
            cache: AugCache {
                enc: enc.cache,
                h_var: enc.h_var,
                h_cons: enc.h_cons,
                edge_var: x.edges.source.clone(),
                edge_cons: x.edges.target.clone(),
            },
        })
    }

    fn backward(&self, l: &MaskLogits, dv: &[f64], dc: &[f64], de: &[f64], g: &mut Grads) {
        let ps = &self.params;
        let c = &l.cache;
        let col = |d: &[f64]| Mat::from_shape_vec((d.len(), 1), d.to_vec()).expect("column");
        let mut dh_var = self.head_var.backward(ps, &c.h_var, &col(dv), g);
        let mut dh_cons = self.head_cons.backward(ps, &c.h_cons, &col(dc), g);
        let mut du = Mat::zeros((c.h_var.nrows(), 1));
        let mut dw = Mat::zeros((c.h_cons.nrows(), 1));
        for (k, &d) in de.iter().enumerate() {
            du[(c.edge_var[k], 0)] += d;
            dw[(c.edge_cons[k], 0)] += d;
        }
        *g.get_mut(self.head_edge_var) += &c.h_var.t().dot(&du);
        *g.get_mut(self.head_edge_cons) += &c.h_cons.t().dot(&dw);
        g.get_mut(self.head_edge_b)[(0, 0)] += de.iter().sum::<f64>();
        dh_var += &du.dot(&ps.get(self.head_edge_var).t());
        dh_cons += &dw.dot(&ps.get(self.head_edge_cons).t());
        self.encoder.backward(ps, &c.enc, &dh_var, &dh_cons, g);
    }

    /// Greedy top-k action per category and its log-probability.
    pub fn propose(&self, x: &GraphInput, props: &Proportions) -> Result<(AugAction, f64), NnError> {
        let l = self.logits(x)?;
        let (kv, kc, ke) = props.counts(l.vars.len(), l.cons.len(), l.edges.len());
        let a = AugAction { vars: top_k(&l.vars, kv), cons: top_k(&l.cons, kc), edges: top_k(&l.edges, ke) };
        let lp = l.log_prob(props, &a);
        Ok((a, lp))
    }

    /// Top-k on Gumbel-perturbed logits, used to retry after a rejected
    /// proposal.
    pub fn propose_perturbed(&self, x: &GraphInput, props: &Proportions, rng: &mut impl Rng) -> Result<(AugAction, f64), NnError> {
        let l = self.logits(x)?;
        let (kv, kc, ke) = props.counts(l.vars.len(), l.cons.len(), l.edges.len());
        let mut perturb = |z: &[f64]| z.iter().map(|&v| v + gumbel(rng)).collect::<Vec<f64>>();
        let (pv, pc, pe) = (perturb(&l.vars), perturb(&l.cons), perturb(&l.edges));
        let a = AugAction { vars: top_k(&pv, kv), cons: top_k(&pc, kc), edges: top_k(&pe, ke) };
        let lp = l.log_prob(props, &a);
        Ok((a, lp))
    }

    /// Every active element drawn independently from its Bernoulli.
    pub fn sample(&self, x: &GraphInput, props: &Proportions, rng: &mut impl Rng) -> Result<(AugAction, f64), NnError> {
        let l = self.logits(x)?;
        let mut draw = |p: f64, z: &[f64]| -> Vec<usize> {
            if p <= 0.0 {
                return Vec::new();
            }
            z.iter().enumerate().filter(|(_, &z)| rng.random::<f64>() < sigmoid(z)).map(|(k, _)| k).collect()
        };
        let a = AugAction { vars: draw(props.vars, &l.vars), cons: draw(props.cons, &l.cons), edges: draw(props.edges, &l.edges) };
        let lp = l.log_prob(props, &a);
        Ok((a, lp))
    }

    /// Log-probability of `a` and its gradient.
    pub fn log_prob_grad(&self, x: &GraphInput, props: &Proportions, a: &AugAction) -> Result<(f64, Grads), NnError> {
        let l = self.logits(x)?;
        let mut g = self.params.zero_grads();
        let (dv, dc, de) = l.logit_grads(props, a, 1.0, 0.0);
        self.backward(&l, &dv, &dc, &de, &mut g);
        Ok((l.log_prob(props, a), g))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            kind: AUGMENTER_KIND.into(),
            config: serde_json::json!({ "hidden": self.hidden, "seed": self.seed }),
            prenorm: self.encoder.prenorms("encoder"),
            tensors: self.params.to_tensors(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        ck.expect_kind(AUGMENTER_KIND)?;
        let hidden = ck.config["hidden"].as_u64().ok_or_else(|| NnError::Checkpoint("missing hidden".into()))? as usize;
        let mut a = Augmenter::new(hidden, ck.config["seed"].as_u64().unwrap_or(0));
        a.params.load_tensors(&ck.tensors)?;
        a.encoder.load_prenorms(ck, "encoder")?;
        Ok(a)
    }
}

/// One augmentation decision awaiting policy-gradient updates.
#[derive(Debug, Clone)]
pub struct BufferEntry {
    pub graph: Arc<GraphInput>,
    pub action: AugAction,
    pub old_log_prob: f64,
    /// Raw reward.
    pub reward: f64,
    /// Reward standardized over the buffer at insertion; the value target.
    pub target: f64,
    /// `target - V(G)` at insertion.
    pub advantage: f64,
}

/// FIFO replay buffer.
#[derive(Debug, Clone)]
pub struct Buffer {
    pub capacity: usize,
    entries: VecDeque<BufferEntry>,
}

impl Buffer {
    pub fn new(capacity: usize) -> Self {
        Buffer { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, e: BufferEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BufferEntry> {
        self.entries.iter()
    }

    /// Mean and standard deviation of the raw rewards held.
    pub fn reward_stats(&self) -> (f64, f64) {
        let n = self.entries.len() as f64;
        if n == 0.0 {
            return (0.0, 0.0);
        }
        let mean = self.entries.iter().map(|e| e.reward).sum::<f64>() / n;
        let var = self.entries.iter().map(|e| (e.reward - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// `(reward - mean) / std`, or 0 when the rewards do not vary.
pub fn standardize(reward: f64, mean: f64, std: f64) -> f64 {
    if std > 1e-12 {
        (reward - mean) / std
    } else {
        0.0
    }
}

/// Sign applied to the discriminator term of the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscriminatorSign {
    /// `F - beta * D`
    #[default]
    Minus,
    /// `F + beta * D`
    Plus,
}

/// Bandit reward from the mean policy loss `f` and the discriminator output.
pub fn reward(f: f64, d: f64, beta: f64, sign: DiscriminatorSign) -> f64 {
    match sign {
        DiscriminatorSign::Minus => f - beta * d,
        DiscriminatorSign::Plus => f + beta * d,
    }
}

/// Mean of per-sample policy losses; `None` when nothing was collected.
pub fn policy_loss_reward(losses: &[f64], d: f64, beta: f64, sign: DiscriminatorSign) -> Option<f64> {
    if losses.is_empty() {
        return None;
    }
    Some(reward(losses.iter().sum::<f64>() / losses.len() as f64, d, beta, sign))
}

/// PPO clipped surrogate term `min(r A, clip(r, 1-eps, 1+eps) A)` and its
/// derivative with respect to `r`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        let inside = ratio > 1.0 - eps && ratio < 1.0 + eps;
        (clipped, if inside { adv } else { 0.0 })
    }
}

/// PPO loss `-mean(surrogate) - c * mean(entropy)` over `batch` and its
/// gradient.
pub fn ppo_loss_grad(aug: &Augmenter, batch: &[&BufferEntry], props: &Proportions, eps: f64, entropy_coef: f64) -> Result<(f64, Grads), NnError> {
    let mut g = aug.params.zero_grads();
    let k = batch.len().max(1) as f64;
    let mut loss = 0.0;
    for e in batch {
        let l = aug.logits(&e.graph)?;
        let ratio = (l.log_prob(props, &e.action) - e.old_log_prob).exp();
        let (s, ds_dr) = clipped_surrogate(ratio, e.advantage, eps);
        loss += -(s + entropy_coef * l.entropy(props)) / k;
        // d(-s/k)/dlogp = -ds/dr * r / k.
        let (dv, dc, de) = l.logit_grads(props, &e.action, -ds_dr * ratio / k, -entropy_coef / k);
        aug.backward(&l, &dv, &dc, &de, &mut g);
    }
    Ok((loss, g))
}

/// `coef * mean((target - V(G))^2)` and its gradient.
pub fn value_loss_grad(value: &GraphScorer, batch: &[&BufferEntry], coef: f64) -> Result<(f64, Grads), NnError> {
    let mut g = value.params.zero_grads();
    let k = batch.len().max(1) as f64;
    let mut loss = 0.0;
    for e in batch {
        let (v, cache) = value.forward(&e.graph)?;
        let a = e.target - v;
        loss += coef * a * a / k;
        value.backward(&cache, -2.0 * coef * a / k, &mut g);
    }
    Ok((loss, g))
}

/// `-mean((r - b) log p(a|G))` over `batch`, with the gradient.
pub fn reinforce_loss_grad(aug: &Augmenter, batch: &[&BufferEntry], props: &Proportions, baseline: f64) -> Result<(f64, Grads), NnError> {
    let mut g = aug.params.zero_grads();
    let k = batch.len().max(1) as f64;
    let mut loss = 0.0;
    for e in batch {
        let l = aug.logits(&e.graph)?;
        let w = e.reward - baseline;
        loss += -w * l.log_prob(props, &e.action) / k;
        let (dv, dc, de) = l.logit_grads(props, &e.action, -w / k, 0.0);
        aug.backward(&l, &dv, &dc, &de, &mut g);
    }
    Ok((loss, g))
}

pub const DISCRIMINATOR_KIND: &str = "discriminator";
pub const VALUE_KIND: &str = "value";

/// Probability that a graph is an original (not augmented) instance.
pub fn discriminate(disc: &GraphScorer, x: &GraphInput) -> Result<f64, NnError> {
    Ok(sigmoid(disc.forward(x)?.0))
}

/// `mean D(augmented) + mean (1 - D(original))` from discriminator outputs.
pub fn discriminator_objective(originals: &[f64], augmented: &[f64]) -> f64 {
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    mean(augmented) + if originals.is_empty() { 0.0 } else { 1.0 - mean(originals) }
}

/// [`discriminator_objective`] evaluated by the network, with its gradient.
pub fn discriminator_loss_grad(disc: &GraphScorer, originals: &[&GraphInput], augmented: &[&GraphInput]) -> Result<(f64, Grads), NnError> {
    let mut g = disc.params.zero_grads();
    let mut loss = 0.0;
    for (set, sign) in [(augmented, 1.0), (originals, -1.0)] {
        let k = set.len().max(1) as f64;
        for x in set {
            let (z, cache) = disc.forward(x)?;
            let d = sigmoid(z);
            loss += if sign > 0.0 { d / k } else { (1.0 - d) / k };
            disc.backward(&cache, sign * d * (1.0 - d) / k, &mut g);
        }
    }
    Ok((loss, g))
}

/// Keep an augmented instance only when the discriminator believes it is
/// an original.
pub fn gate(d: f64) -> bool {
    d > 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmenterAlgorithm {
    #[default]
    Ppo,
    Reinforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmenterConfig {
    pub lr: f64,
    pub batch: usize,
    pub entropy_coef: f64,
    pub ppo_epochs: usize,
    pub buffer_size: usize,
    pub clip: f64,
    pub value_coef: f64,
    pub beta: f64,
    pub discriminator_sign: DiscriminatorSign,
    pub proportions: Proportions,
    pub algorithm: AugmenterAlgorithm,
    pub hidden: usize,
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for AugmenterConfig {
    fn default() -> Self {
        AugmenterConfig {
            lr: 1e-3,
            batch: 4,
            entropy_coef: 1e-2,
            ppo_epochs: 3,
            buffer_size: 300,
            clip: 0.2,
            value_coef: 0.5,
            beta: 0.01,
            discriminator_sign: DiscriminatorSign::Minus,
            proportions: Proportions::zero(),
            algorithm: AugmenterAlgorithm::Ppo,
            hidden: 64,
            max_retries: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("clip ratio must lie in (0, 1), got {0}")]
    Clip(f64),
    #[error("masking proportions must lie in [0, {MAX_PROPORTION}]")]
    Proportion,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

impl AugmenterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(ConfigError::Clip(self.clip));
        }
        let p = self.proportions;
        if [p.vars, p.cons, p.edges].iter().any(|v| !(0.0..=MAX_PROPORTION).contains(v)) {
            return Err(ConfigError::Proportion);
        }
        for (name, v) in [("lr", self.lr), ("batch", self.batch as f64), ("buffer_size", self.buffer_size as f64)] {
            if v <= 0.0 {
                return Err(ConfigError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// Augmenter, value net and discriminator with their optimizers and the
/// replay buffer.
pub struct AdversaryTrainer {
    pub config: AugmenterConfig,
    pub augmenter: Augmenter,
    pub value: GraphScorer,
    pub discriminator: GraphScorer,
    adam_aug: Adam,
    adam_value: Adam,
    adam_disc: Adam,
    pub buffer: Buffer,
    rng: ChaCha8Rng,
    reward_sum: f64,
    reward_count: f64,
    pub updates: usize,
}

impl AdversaryTrainer {
    pub fn new(config: AugmenterConfig) -> Self {
        let augmenter = Augmenter::new(config.hidden, config.seed);
        let value = GraphScorer::new(config.hidden, config.seed.wrapping_add(1));
        let discriminator = GraphScorer::new(config.hidden, config.seed.wrapping_add(2));
        AdversaryTrainer {
            adam_aug: Adam::new(&augmenter.params, config.lr),
            adam_value: Adam::new(&value.params, config.lr),
            adam_disc: Adam::new(&discriminator.params, config.lr),
            augmenter,
            value,
            discriminator,
            buffer: Buffer::new(config.buffer_size),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed),
            reward_sum: 0.0,
            reward_count: 0.0,
            updates: 0,
            config,
        }
    }

    /// Fits the encoders' prenorm layers on the training graphs.
    pub fn fit_prenorm<'a>(&mut self, graphs: impl IntoIterator<Item = &'a GraphInput> + Clone) {
        self.augmenter.encoder.fit_prenorm(&self.augmenter.params, graphs.clone());
        self.value.encoder.fit_prenorm(&self.value.params, graphs.clone());
        self.discriminator.encoder.fit_prenorm(&self.discriminator.params, graphs);
    }

    /// Proposes, masks and validates, retrying with perturbed proposals.
    /// Returns `None` if every attempt was rejected.
    pub fn augment(&mut self, inst: &MilpInstance, graph: &GraphInput) -> Result<Option<(MilpInstance, AugAction, f64)>, NnError> {
        let props = self.config.proportions;
        for attempt in 0..=self.config.max_retries {
            let (a, lp) = if attempt == 0 {
                self.augmenter.propose(graph, &props)?
            } else {
                self.augmenter.propose_perturbed(graph, &props, &mut self.rng)?
            };
            if let Ok(out) = apply_mask(inst, &a) {
                return Ok(Some((out, a, lp)));
            }
        }
        Ok(None)
    }

    /// Running-mean baseline for REINFORCE.
    pub fn reward_baseline(&self) -> f64 {
        if self.reward_count == 0.0 {
            0.0
        } else {
            self.reward_sum / self.reward_count
        }
    }

    /// Appends a decision; its advantage is computed from the standardized
    /// reward and the current value estimate.
    pub fn record(&mut self, graph: Arc<GraphInput>, action: AugAction, old_log_prob: f64, reward: f64) -> Result<(), NnError> {
        let v = self.value.forward(&graph)?.0;
        self.buffer.push(BufferEntry { graph, action, old_log_prob, reward, target: 0.0, advantage: 0.0 });
        let (mean, std) = self.buffer.reward_stats();
        let target = standardize(reward, mean, std);
        let last = self.buffer.entries.back_mut().expect("just pushed");
        last.target = target;
        last.advantage = target - v;
        Ok(())
    }

    /// PPO over the whole buffer, or one REINFORCE pass over `fresh`
    /// entries (the most recent ones).
    pub fn update_policy(&mut self, fresh: usize) -> Result<(), NnError> {
        let props = self.config.proportions;
        match self.config.algorithm {
            AugmenterAlgorithm::Ppo => {
                let mut order: Vec<usize> = (0..self.buffer.len()).collect();
                for _ in 0..self.config.ppo_epochs {
                    order.shuffle(&mut self.rng);
                    for chunk in order.chunks(self.config.batch.max(1)) {
                        let batch: Vec<&BufferEntry> = chunk.iter().map(|&k| &self.buffer.entries[k]).collect();
                        let (_, g) = ppo_loss_grad(&self.augmenter, &batch, &props, self.config.clip, self.config.entropy_coef)?;
                        self.adam_aug.step(&mut self.augmenter.params, &g)?;
                        let (_, gv) = value_loss_grad(&self.value, &batch, self.config.value_coef)?;
                        self.adam_value.step(&mut self.value.params, &gv)?;
                    }
                }
            }
            AugmenterAlgorithm::Reinforce => {
                let start = self.buffer.len().saturating_sub(fresh);
                let batch: Vec<&BufferEntry> = self.buffer.entries.range(start..).collect();
                if !batch.is_empty() {
                    let (_, g) = reinforce_loss_grad(&self.augmenter, &batch, &props, self.reward_baseline())?;
                    self.adam_aug.step(&mut self.augmenter.params, &g)?;
                    for e in &batch {
                        self.reward_sum += e.reward;
                        self.reward_count += 1.0;
                    }
                }
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// One gradient step on the discriminator loss.
    pub fn update_discriminator(&mut self, originals: &[&GraphInput], augmented: &[&GraphInput]) -> Result<f64, NnError> {
        let (loss, g) = discriminator_loss_grad(&self.discriminator, originals, augmented)?;
        self.adam_disc.step(&mut self.discriminator.params, &g)?;
        Ok(loss)
    }

    pub fn discriminate(&self, x: &GraphInput) -> Result<f64, NnError> {
        discriminate(&self.discriminator, x)
    }
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting
/// one half.
pub fn auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut s = 0.0;
    for &p in positives {
        for &n in negatives {
            s += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (positives.len() * negatives.len()).max(1) as f64
}
