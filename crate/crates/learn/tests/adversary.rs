mod support;

use std::sync::Arc;

use milpbranch_core::bnb::{self, BnbConfig, StrongBranching};
use milpbranch_core::gen::{self, base_params, Family, GenSpec, Preset};
use milpbranch_core::model::to_instance_graph;
use milpbranch_core::MilpInstance;
use milpbranch_learn::adversary::{
    apply_mask, auc, gate, random_action, random_augment, reinforce_loss_grad, AdversaryTrainer, AugAction, Augmenter,
    AugmenterAlgorithm, AugmenterConfig, Buffer, BufferEntry, Proportions, Rejection,
};
use milpbranch_learn::bandit::{run_bandit, ToyBandit};
use milpbranch_learn::gnn::{GraphInput, GraphScorer};
use milpbranch_learn::nn::{Checkpoint, EdgeList, Mat};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{brute_force, normal_mat, random_graph};

fn tiny(family: Family, seed: u64) -> MilpInstance {
    gen::generate(&GenSpec { params: base_params(family, Preset::Tiny), seed }).unwrap()
}

fn graph(inst: &MilpInstance) -> GraphInput {
    GraphInput::new(&to_instance_graph(inst))
}

#[test]
fn zero_proportions_propose_nothing() {
    let aug = Augmenter::new(8, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        let g = random_graph(&mut rng);
        let (a, lp) = aug.propose(&g, &Proportions::zero()).unwrap();
        assert!(a.is_empty());
        assert_eq!(lp, 0.0);
        let (s, lp) = aug.sample(&g, &Proportions::zero(), &mut rng).unwrap();
        assert!(s.is_empty());
        assert_eq!(lp, 0.0);
    }
}

#[test]
fn top_k_picks_the_highest_logit() {
    let aug = Augmenter::new(8, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let props = Proportions { vars: 0.1, cons: 0.0, edges: 0.0 };
    for _ in 0..10 {
        let g = GraphInput {
            var: normal_mat(10, 9, &mut rng),
            cons: normal_mat(3, 1, &mut rng),
            edges: support::random_edges(3, 10, &mut rng),
        };
        let (a, _) = aug.propose(&g, &props).unwrap();
        let z = aug.logits(&g).unwrap().vars;
        let best = (0..10).max_by(|&i, &j| z[i].total_cmp(&z[j]).then(j.cmp(&i))).unwrap();
        assert_eq!(a.vars, vec![best]);
        assert!(a.cons.is_empty() && a.edges.is_empty());
    }
}

#[test]
fn logits_follow_node_permutations() {
    let aug = Augmenter::new(8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let g = random_graph(&mut rng);
        let mut pv: Vec<usize> = (0..g.var.nrows()).collect();
        pv.shuffle(&mut rng);
        let mut iv = vec![0; pv.len()];
        pv.iter().enumerate().for_each(|(k, &o)| iv[o] = k);
        let h = GraphInput {
            var: Mat::from_shape_fn(g.var.dim(), |(k, f)| g.var[(pv[k], f)]),
            cons: g.cons.clone(),
            edges: EdgeList { target: g.edges.target.clone(), source: g.edges.source.iter().map(|&j| iv[j]).collect(), value: g.edges.value.clone() },
        };
        let (lg, lh) = (aug.logits(&g).unwrap(), aug.logits(&h).unwrap());
        for k in 0..pv.len() {
            assert!((lh.vars[k] - lg.vars[pv[k]]).abs() < 1e-10);
        }
        for (a, b) in lg.cons.iter().zip(&lh.cons) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in lg.edges.iter().zip(&lh.edges) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn empty_mask_keeps_the_instance() {
    for family in Family::ALL {
        let inst = tiny(family, 3);
        assert_eq!(apply_mask(&inst, &AugAction::default()).unwrap(), inst);
    }
}

#[test]
fn out_of_range_masks_are_rejected() {
    let inst = tiny(Family::SetCovering, 0);
    let a = AugAction { vars: vec![inst.num_vars()], ..AugAction::default() };
    assert_eq!(apply_mask(&inst, &a), Err(Rejection::OutOfRange));
}

#[test]
fn masking_every_integer_variable_is_rejected() {
    let inst = tiny(Family::MaxIndependentSet, 0);
    let a = AugAction { vars: (0..inst.num_vars()).collect(), ..AugAction::default() };
    assert_eq!(apply_mask(&inst, &a), Err(Rejection::NoIntegerVarLeft));
}

#[test]
fn deleting_constraints_never_raises_and_fixing_never_lowers_the_optimum() {
    let families = [Family::SetCovering, Family::CombinatorialAuctions, Family::MaxIndependentSet];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut deletions, mut fixings) = (0, 0);
    for pair in 0..100u64 {
        let inst = tiny(families[(pair % 3) as usize], 100 + pair);
        let base = brute_force(&inst);
        let k = rng.random_range(1..=2.min(inst.num_rows()));
        let cons = rand::seq::index::sample(&mut rng, inst.num_rows(), k).into_vec();
        if let Ok(relaxed) = apply_mask(&inst, &AugAction { cons, ..AugAction::default() }) {
            let v = brute_force(&relaxed).unwrap();
            if let Some(b) = base {
                assert!(v <= b + 1e-9, "pair {pair}: deletion raised {b} to {v}");
            }
            deletions += 1;
        }
        let j = rng.random_range(0..inst.num_vars());
        if let Ok(fixed) = apply_mask(&inst, &AugAction { vars: vec![j], ..AugAction::default() }) {
            match (base, brute_force(&fixed)) {
                (Some(b), Some(v)) => assert!(v >= b - 1e-9, "pair {pair}: fixing lowered {b} to {v}"),
                (None, Some(v)) => panic!("pair {pair}: fixing made an infeasible instance feasible ({v})"),
                _ => {}
            }
            fixings += 1;
        }
    }
    assert!(deletions >= 90 && fixings >= 90, "{deletions} deletions, {fixings} fixings");
}

#[test]
fn masked_optimum_matches_branch_and_bound() {
    for seed in 0..20 {
        let inst = tiny(Family::SetCovering, seed);
        let (aug, _) = random_augment(&inst, &Proportions { vars: 0.0, cons: 0.05, edges: 0.05 }, seed).unwrap();
        let r = bnb::solve(&aug, &mut StrongBranching::new(), &BnbConfig::default()).unwrap();
        assert_eq!(r.objective, brute_force(&aug));
    }
}

#[test]
fn random_augmentation_is_seeded_and_sized_like_the_augmenter() {
    let inst = gen::generate(&GenSpec { params: base_params(Family::SetCovering, Preset::Desk), seed: 0 }).unwrap();
    let props = Proportions { vars: 0.0, cons: 0.05, edges: 0.01 };
    let (a1, m1) = random_augment(&inst, &props, 9).unwrap();
    let (a2, m2) = random_augment(&inst, &props, 9).unwrap();
    assert_eq!((a1, &m1), (a2, &m2));
    let g = graph(&inst);
    let (p, _) = Augmenter::new(8, 0).propose(&g, &props).unwrap();
    assert_eq!((m1.vars.len(), m1.cons.len(), m1.edges.len()), (p.vars.len(), p.cons.len(), p.edges.len()));
    assert_eq!(m1.cons.len(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let other = random_action(&to_instance_graph(&inst), &props, &mut rng);
    assert!(other.cons.windows(2).all(|w| w[0] < w[1]));
}

fn entry(graph: &Arc<GraphInput>, reward: f64) -> BufferEntry {
    BufferEntry { graph: graph.clone(), action: AugAction::default(), old_log_prob: 0.0, reward, target: 0.0, advantage: 0.0 }
}

#[test]
fn buffer_is_a_bounded_fifo() {
    let g = Arc::new(random_graph(&mut ChaCha8Rng::seed_from_u64(0)));
    let mut b = Buffer::new(300);
    for k in 0..1000 {
        b.push(entry(&g, k as f64));
        assert!(b.len() <= 300);
    }
    assert_eq!(b.iter().next().unwrap().reward, 700.0);
}

#[test]
fn recorded_rewards_are_standardized_over_the_buffer() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t = AdversaryTrainer::new(AugmenterConfig { hidden: 8, buffer_size: 5, ..AugmenterConfig::default() });
    let g = Arc::new(random_graph(&mut rng));
    let rewards = [1.0, 3.0, -2.0, 0.5, 4.0, 7.0, -1.0];
    for (k, &r) in rewards.iter().enumerate() {
        t.record(g.clone(), AugAction::default(), 0.0, r).unwrap();
        let held: Vec<f64> = rewards[k.saturating_sub(4)..=k].to_vec();
        let mean = held.iter().sum::<f64>() / held.len() as f64;
        let std = (held.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / held.len() as f64).sqrt();
        let last = t.buffer.iter().last().unwrap();
        let expect = if std > 0.0 { (r - mean) / std } else { 0.0 };
        assert!((last.target - expect).abs() < 1e-12);
        let v = t.value.forward(&g).unwrap().0;
        assert!((last.advantage - (expect - v)).abs() < 1e-12);
    }
}

#[test]
fn reinforce_gradient_vanishes_at_the_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let aug = Augmenter::new(8, 4);
    let props = Proportions { vars: 0.05, cons: 0.05, edges: 0.05 };
    let g = Arc::new(random_graph(&mut rng));
    let (a, lp) = aug.sample(&g, &props, &mut rng).unwrap();
    let e = BufferEntry { graph: g, action: a, old_log_prob: lp, reward: 2.5, target: 0.0, advantage: 0.0 };
    let (_, grad) = reinforce_loss_grad(&aug, &[&e], &props, 2.5).unwrap();
    assert_eq!(grad.max_abs(), 0.0);
    let (_, grad) = reinforce_loss_grad(&aug, &[&e], &props, 1.0).unwrap();
    assert!(grad.max_abs() > 0.0);
}

#[test]
fn fresh_entries_have_unit_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let aug = Augmenter::new(8, 6);
    let props = Proportions { vars: 0.05, cons: 0.05, edges: 0.05 };
    for _ in 0..10 {
        let g = random_graph(&mut rng);
        let (a, lp) = aug.sample(&g, &props, &mut rng).unwrap();
        let (now, _) = aug.log_prob_grad(&g, &props, &a).unwrap();
        assert_eq!((now - lp).exp(), 1.0);
    }
}

#[test]
fn augmenter_and_scorer_checkpoints_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let graphs: Vec<GraphInput> = (0..4).map(|_| random_graph(&mut rng)).collect();
    let mut aug = Augmenter::new(8, 3);
    aug.encoder.fit_prenorm(&aug.params.clone(), graphs.iter());
    let mut disc = GraphScorer::new(8, 5);
    disc.encoder.fit_prenorm(&disc.params.clone(), graphs.iter());
    let dir = tempfile::tempdir().unwrap();
    aug.checkpoint().save(dir.path().join("a.json")).unwrap();
    disc.checkpoint("discriminator").save(dir.path().join("d.json")).unwrap();
    let aug2 = Augmenter::from_checkpoint(&Checkpoint::load(dir.path().join("a.json")).unwrap()).unwrap();
    let disc2 = GraphScorer::from_checkpoint(&Checkpoint::load(dir.path().join("d.json")).unwrap(), "discriminator").unwrap();
    for g in &graphs {
        assert_eq!(aug.logits(g).unwrap().vars, aug2.logits(g).unwrap().vars);
        assert_eq!(disc.forward(g).unwrap().0, disc2.forward(g).unwrap().0);
    }
    assert!(GraphScorer::from_checkpoint(&Checkpoint::load(dir.path().join("d.json")).unwrap(), "value").is_err());
}

#[test]
fn ppo_beats_reinforce_on_the_toy_bandit() {
    for seed in 0..4 {
        let ppo = run_bandit(AugmenterConfig { seed, ..AugmenterConfig::default() }, 200, 0.9).unwrap();
        let rf = run_bandit(AugmenterConfig { seed, algorithm: AugmenterAlgorithm::Reinforce, ..AugmenterConfig::default() }, 2000, 0.9)
            .unwrap();
        let (p, r) = (ppo.updates_to_target.expect("PPO"), rf.updates_to_target.expect("REINFORCE"));
        assert!(p < r, "seed {seed}: PPO {p} vs REINFORCE {r}");
        assert!(*ppo.curve.last().unwrap() >= 0.9 * ToyBandit::optimal());
    }
}

#[test]
fn discriminator_separates_distinct_populations() {
    let sparse: Vec<GraphInput> = (0..40).map(|s| graph(&gen::gen_set_covering(12, 20, 0.1, s).unwrap())).collect();
    let dense: Vec<GraphInput> = (0..40).map(|s| graph(&gen::gen_set_covering(12, 20, 0.6, 1000 + s).unwrap())).collect();
    let mut t = AdversaryTrainer::new(AugmenterConfig { hidden: 16, seed: 1, ..AugmenterConfig::default() });
    t.fit_prenorm(sparse.iter().chain(dense.iter()));
    let (train_o, test_o) = sparse.split_at(30);
    let (train_a, test_a) = dense.split_at(30);
    let mut steps = 0;
    let mut score = 0.0;
    while steps < 500 {
        let o: Vec<&GraphInput> = train_o.iter().skip(steps % 30).take(4).collect();
        let a: Vec<&GraphInput> = train_a.iter().skip(steps % 30).take(4).collect();
        t.update_discriminator(&o, &a).unwrap();
        steps += 1;
        if steps % 25 == 0 {
            let po: Vec<f64> = test_o.iter().map(|g| t.discriminate(g).unwrap()).collect();
            let pa: Vec<f64> = test_a.iter().map(|g| t.discriminate(g).unwrap()).collect();
            score = auc(&po, &pa);
            if score >= 0.9 {
                break;
            }
        }
    }
    assert!(score >= 0.9, "AUC {score} after {steps} steps");
    for g in test_o.iter().chain(test_a) {
        let d = t.discriminate(g).unwrap();
        assert_eq!(gate(d), d > 0.5);
    }
}
