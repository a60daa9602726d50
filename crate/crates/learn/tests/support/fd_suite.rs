//! Finite-difference checks, shared by the gradient tests and the acceptance run.

use std::sync::Arc;

use milpbranch_learn::adversary::{
    discriminator_loss_grad, ppo_loss_grad, reinforce_loss_grad, value_loss_grad, AugAction, Augmenter, BufferEntry,
    Proportions,
};
use milpbranch_learn::gnn::{GraphInput, GraphScorer, PolicyNet, PolicyNetConfig, SampleInput};
use milpbranch_learn::nn::{masked_cross_entropy, HalfConv, Mat, Mlp2, ParamSet};
use milpbranch_core::features::{CONS_FEATURES, VAR_FEATURES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use super::*;

const SEEDS: u64 = 20;
const HIDDEN: usize = 6;

fn flat(m: &Mat) -> Vec<f64> {
    m.iter().copied().collect()
}

fn reshape(v: &[f64], like: &Mat) -> Mat {
    Mat::from_shape_vec(like.dim(), v.to_vec()).unwrap()
}

pub fn masked_cross_entropy_scores() -> (&'static str, FdReport) {
    let mut total = FdReport::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..9);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        mask[0] = true;
        let cands: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
        let target = cands[rng.random_range(0..cands.len())];
        let (_, d) = masked_cross_entropy(&scores, &mask, target).unwrap();
        total.merge(check(&scores, &d, |s| (masked_cross_entropy(s, &mask, target).unwrap().0, vec![])));
    }
    ("masked softmax cross-entropy", total)
}

pub fn two_layer_mlp() -> (&'static str, FdReport) {
    let mut total = FdReport::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut ps = ParamSet::new();
        let mlp = Mlp2::new(&mut ps, "m", 4, 5, 3, &mut rng);
        let x = normal_mat(6, 4, &mut rng);
        let w = normal_mat(6, 3, &mut rng);
        let (_, c) = mlp.forward(&ps, &x);
        let mut g = ps.zero_grads();
        let dx = mlp.backward(&ps, &c, &w, &mut g);
        let loss = |ps: &ParamSet, x: &Mat| {
            let (y, c) = mlp.forward(ps, x);
            let mut sig = Vec::new();
            c.signature(&mut sig);
            ((&y * &w).sum(), sig)
        };
        total.merge(check(&ps.flat(), &g.flat(), |t| {
            let mut p = ps.clone();
            p.set_flat(t);
            loss(&p, &x)
        }));
        total.merge(check(&flat(&x), &flat(&dx), |t| loss(&ps, &reshape(t, &x))));
    }
    ("two-layer MLP", total)
}

pub fn half_convolution() -> (&'static str, FdReport) {
    let mut total = FdReport::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (nt, ns) = (rng.random_range(1..5), rng.random_range(1..6));
        let mut ps = ParamSet::new();
        let mut conv = HalfConv::new(&mut ps, "c", 3, 4, 5, 2, &mut rng);
        conv.msg_scale = rng.random_range(0.5..3.0);
        let xt = normal_mat(nt, 3, &mut rng);
        let xs = normal_mat(ns, 4, &mut rng);
        let edges = random_edges(nt, ns, &mut rng);
        let w = normal_mat(nt, 2, &mut rng);
        let (_, c) = conv.forward(&ps, &xt, &xs, &edges).unwrap();
        let mut g = ps.zero_grads();
        let (dxt, dxs) = conv.backward(&ps, &c, &edges, &w, &mut g);
        let loss = |ps: &ParamSet, xt: &Mat, xs: &Mat| {
            let (y, c) = conv.forward(ps, xt, xs, &edges).unwrap();
            let mut sig = Vec::new();
            c.signature(&mut sig);
            ((&y * &w).sum(), sig)
        };
        total.merge(check(&ps.flat(), &g.flat(), |t| {
            let mut p = ps.clone();
            p.set_flat(t);
            loss(&p, &xt, &xs)
        }));
        total.merge(check(&flat(&xt), &flat(&dxt), |t| loss(&ps, &reshape(t, &xt), &xs)));
        total.merge(check(&flat(&xs), &flat(&dxs), |t| loss(&ps, &xt, &reshape(t, &xs))));
    }
    ("half-convolution", total)
}

fn random_policy(seed: u64, rng: &mut ChaCha8Rng) -> PolicyNet {
    let mut net = PolicyNet::new(PolicyNetConfig { hidden: HIDDEN, seed });
    net.var_norm = random_prenorm(VAR_FEATURES, rng);
    net.cons_norm = random_prenorm(CONS_FEATURES, rng);
    net.edge_norm = random_prenorm(1, rng);
    net.conv_vc.msg_scale = rng.random_range(0.5..3.0);
    net.conv_cv.msg_scale = rng.random_range(0.5..3.0);
    net
}

fn policy_loss(net: &PolicyNet, x: &SampleInput, target: usize) -> (f64, Vec<bool>) {
    let (s, c) = net.forward(x).unwrap();
    (masked_cross_entropy(&s, &x.mask, target).unwrap().0, c.signature())
}

pub fn policy_network_with_cross_entropy() -> (&'static str, FdReport) {
    let mut total = FdReport::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let net = random_policy(seed, &mut rng);
        let (x, target) = random_sample(&mut rng);
        let (s, c) = net.forward(&x).unwrap();
        let (_, d) = masked_cross_entropy(&s, &x.mask, target).unwrap();
        let g = net.backward(&c, &d);
        total.merge(check(&net.params.flat(), &g.params.flat(), |t| {
            let mut n = net.clone();
            n.params.set_flat(t);
            policy_loss(&n, &x, target)
        }));
    }
    ("policy network", total)
}

pub fn prenorm_and_embedding_inputs() -> (&'static str, FdReport) {
    let mut total = FdReport::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let net = random_policy(seed, &mut rng);
        let (x, target) = random_sample(&mut rng);
        let (s, c) = net.forward(&x).unwrap();
        let (_, d) = masked_cross_entropy(&s, &x.mask, target).unwrap();
        let g = net.backward(&c, &d);
        total.merge(check(&flat(&x.var), &flat(&g.var_input), |t| {
            let mut y = x.clone();
            y.var = reshape(t, &x.var);
            policy_loss(&net, &y, target)
        }));
        total.merge(check(&flat(&x.cons), &flat(&g.cons_input), |t| {
            let mut y = x.clone();
            y.cons = reshape(t, &x.cons);
            policy_loss(&net, &y, target)
        }));
    }
    ("prenorm inputs", total)
}

fn random_augmenter(seed: u64, rng: &mut ChaCha8Rng) -> Augmenter {
    let mut a = Augmenter::new(HIDDEN, seed);
    a.encoder.var_norm = random_prenorm(9, rng);
    a.encoder.cons_norm = random_prenorm(1, rng);
    a.encoder.edge_norm = random_prenorm(1, rng);
    a.encoder.conv_vc.msg_scale = rng.random_range(0.5..3.0);
    a.encoder.conv_cv.msg_scale = rng.random_range(0.5..3.0);
    a
}

fn random_scorer(seed: u64, rng: &mut ChaCha8Rng) -> GraphScorer {
    let mut s = GraphScorer::new(HIDDEN, seed);
    s.encoder.var_norm = random_prenorm(9, rng);
    s.encoder.cons_norm = random_prenorm(1, rng);
    s.encoder.edge_norm = random_prenorm(1, rng);
    s.encoder.conv_vc.msg_scale = rng.random_range(0.5..3.0);
    s.encoder.conv_cv.msg_scale = rng.random_range(0.5..3.0);
    s
}

fn random_action(g: &GraphInput, rng: &mut ChaCha8Rng) -> AugAction {
    let pick = |n: usize, rng: &mut ChaCha8Rng| (0..n).filter(|_| rng.random_bool(0.3)).collect();
    AugAction { vars: pick(g.var.nrows(), rng), cons: pick(g.cons.nrows(), rng), edges: pick(g.edges.len(), rng) }
}

const ALL: Proportions = Proportions { vars: 0.05, cons: 0.05, edges: 0.05 };

fn augmenter_signature(aug: &Augmenter, graphs: &[&GraphInput]) -> Vec<bool> {
    graphs.iter().flat_map(|g| aug.logits(g).unwrap().signature()).collect()
}

pub fn reinforce_log_probability() -> (&'static str, FdReport) {
    let mut total = FdReport::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let aug = random_augmenter(seed, &mut rng);
        let g = random_graph(&mut rng);
        let a = random_action(&g, &mut rng);
        let props = if seed % 2 == 0 { ALL } else { Proportions { vars: 0.05, cons: 0.0, edges: 0.01 } };
        let (_, grad) = aug.log_prob_grad(&g, &props, &a).unwrap();
        total.merge(check(&aug.params.flat(), &grad.flat(), |t| {
            let mut m = aug.clone();
            m.params.set_flat(t);
            let l = m.logits(&g).unwrap();
            (l.log_prob(&props, &a), l.signature())
        }));
        let entries: Vec<BufferEntry> = (0..3)
            .map(|_| {
                let g = Arc::new(random_graph(&mut rng));
                let action = random_action(&g, &mut rng);
                BufferEntry { graph: g, action, old_log_prob: 0.0, reward: rng.random_range(-1.0..1.0), target: 0.0, advantage: 0.0 }
            })
            .collect();
        let batch: Vec<&BufferEntry> = entries.iter().collect();
        let (_, grad) = reinforce_loss_grad(&aug, &batch, &props, 0.1).unwrap();
        let graphs: Vec<&GraphInput> = entries.iter().map(|e| e.graph.as_ref()).collect();
        total.merge(check(&aug.params.flat(), &grad.flat(), |t| {
            let mut m = aug.clone();
            m.params.set_flat(t);
            (reinforce_loss_grad(&m, &batch, &props, 0.1).unwrap().0, augmenter_signature(&m, &graphs))
        }));
    }
    ("REINFORCE log-probability", total)
}

pub fn ppo_clipped_objective() -> (&'static str, FdReport) {
    let mut total = FdReport::default();
    let eps = 0.2;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let aug = random_augmenter(seed, &mut rng);
        let entries: Vec<BufferEntry> = (0..4)
            .map(|_| {
                let g = Arc::new(random_graph(&mut rng));
                let action = random_action(&g, &mut rng);
                let lp = aug.logits(&g).unwrap().log_prob(&ALL, &action);
                // Spread ratios across, below and above the clip window.
                let shift = rng.random_range(-0.5..0.5);
                BufferEntry { graph: g, action, old_log_prob: lp + shift, reward: 0.0, target: 0.0, advantage: rng.random_range(-2.0..2.0) }
            })
            .collect();
        let batch: Vec<&BufferEntry> = entries.iter().collect();
        let coef = 0.5;
        let (_, grad) = ppo_loss_grad(&aug, &batch, &ALL, eps, coef).unwrap();
        let graphs: Vec<&GraphInput> = entries.iter().map(|e| e.graph.as_ref()).collect();
        total.merge(check(&aug.params.flat(), &grad.flat(), |t| {
            let mut m = aug.clone();
            m.params.set_flat(t);
            let mut sig = augmenter_signature(&m, &graphs);
            for e in &entries {
                let r = (m.logits(&e.graph).unwrap().log_prob(&ALL, &e.action) - e.old_log_prob).exp();
                sig.push(r < 1.0 - eps);
                sig.push(r > 1.0 + eps);
            }
            (ppo_loss_grad(&m, &batch, &ALL, eps, coef).unwrap().0, sig)
        }));
    }
    ("PPO clipped objective", total)
}

pub fn value_loss() -> (&'static str, FdReport) {
    let mut total = FdReport::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let value = random_scorer(seed, &mut rng);
        let entries: Vec<BufferEntry> = (0..3)
            .map(|_| BufferEntry {
                graph: Arc::new(random_graph(&mut rng)),
                action: AugAction::default(),
                old_log_prob: 0.0,
                reward: 0.0,
                target: rng.random_range(-2.0..2.0),
                advantage: 0.0,
            })
            .collect();
        let batch: Vec<&BufferEntry> = entries.iter().collect();
        let (_, grad) = value_loss_grad(&value, &batch, 0.5).unwrap();
        total.merge(check(&value.params.flat(), &grad.flat(), |t| {
            let mut v = value.clone();
            v.params.set_flat(t);
            let sig = entries.iter().flat_map(|e| v.forward(&e.graph).unwrap().1.signature()).collect();
            (value_loss_grad(&v, &batch, 0.5).unwrap().0, sig)
        }));
    }
    ("value loss", total)
}

pub fn discriminator_loss() -> (&'static str, FdReport) {
    let mut total = FdReport::default();
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let disc = random_scorer(seed, &mut rng);
        let orig: Vec<GraphInput> = (0..3).map(|_| random_graph(&mut rng)).collect();
        let aug: Vec<GraphInput> = (0..2).map(|_| random_graph(&mut rng)).collect();
        let (o, a): (Vec<&GraphInput>, Vec<&GraphInput>) = (orig.iter().collect(), aug.iter().collect());
        let (_, grad) = discriminator_loss_grad(&disc, &o, &a).unwrap();
        total.merge(check(&disc.params.flat(), &grad.flat(), |t| {
            let mut d = disc.clone();
            d.params.set_flat(t);
            let sig = o.iter().chain(&a).flat_map(|g| d.forward(g).unwrap().1.signature()).collect();
            (discriminator_loss_grad(&d, &o, &a).unwrap().0, sig)
        }));
    }
    ("discriminator loss", total)
}

pub fn all() -> Vec<(&'static str, FdReport)> {
    vec![masked_cross_entropy_scores(), two_layer_mlp(), half_convolution(), policy_network_with_cross_entropy(), prenorm_and_embedding_inputs(), reinforce_log_probability(), ppo_clipped_objective(), value_loss(), discriminator_loss()]
}
