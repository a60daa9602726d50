//! Policy training with optional adversarial instance augmentation.
//!
//! With augmentation off (plain modes, zero proportions, or epochs before
//! `augment_from`) every epoch consumes exactly the random draws of plain
//! training, so the policy trajectory does not depend on the mode.

use std::sync::Arc;

use milpbranch_core::bnb::{self, run_expert_collect, BnbConfig, NodeSelection};
use milpbranch_core::model::to_instance_graph;
use milpbranch_core::MilpInstance;
use milpbranch_learn::adversary::{self, gate, policy_loss_reward, random_augment, AdversaryTrainer, AugAction, Proportions};
use milpbranch_learn::gnn::{GraphInput, PolicyNet, PolicyNetConfig};
use milpbranch_learn::nn::{masked_cross_entropy, NnError, ParamSet};
use milpbranch_learn::policy::{evaluate, run_episode, Example, GnnBranching, IlConfig, IlTrainer, RlError, RlTrainer};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Mode, RunConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Solve(#[from] bnb::SolveError),
    #[error("{0} mode needs a different training entry point")]
    WrongMode(&'static str),
    #[error("no training data")]
    EmptyDataset,
}

/// One line of the discriminator gate audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub epoch: usize,
    /// Index of the source instance in the training set.
    pub instance: usize,
    pub discriminator: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    /// Validation cross-entropy (IL) or mean node count (RL).
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    pub lr: f64,
    pub proposed: usize,
    pub accepted: usize,
    pub augmented_samples: usize,
    /// Mean bandit reward of this epoch's proposals.
    pub mean_reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub mode: Option<Mode>,
    pub epochs: Vec<EpochLog>,
    pub gate_audit: Vec<GateRecord>,
}

pub struct TrainOutcome {
    /// Best-validation policy.
    pub policy: PolicyNet,
    pub log: TrainLog,
    pub adversary: Option<AdversaryTrainer>,
}

pub struct IlData<'a> {
    /// Instances the training samples came from; the augmentation source.
    pub instances: &'a [MilpInstance],
    pub train: &'a [Example],
    pub valid: &'a [Example],
}

pub struct RlData<'a> {
    pub instances: &'a [MilpInstance],
    pub valid: &'a [MilpInstance],
}

const DATA_STREAM: u64 = 0xda7a;
const AUG_STREAM: u64 = 0xa09;

fn new_policy(cfg: &RunConfig) -> PolicyNet {
    PolicyNet::new(PolicyNetConfig { hidden: cfg.hidden, seed: cfg.seed })
}

fn graph_of(inst: &MilpInstance) -> GraphInput {
    GraphInput::new(&to_instance_graph(inst))
}

/// Draws `k` distinct indices from `0..n`, or all of them in order when
/// `k >= n`.
fn draw(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if k >= n {
        (0..n).collect()
    } else {
        index::sample(rng, n, k).into_vec()
    }
}

/// The augmentation side of Algorithm 1.
struct Augmentation {
    mode: Mode,
    props: Proportions,
    trainer: AdversaryTrainer,
    rng: ChaCha8Rng,
}

/// A proposal that produced an augmented instance.
struct Proposal {
    source: usize,
    graph: Arc<GraphInput>,
    action: AugAction,
    log_prob: f64,
    instance: MilpInstance,
    aug_graph: GraphInput,
    discriminator: f64,
    accepted: bool,
}

impl Augmentation {
    fn new(cfg: &RunConfig, instances: &[MilpInstance]) -> Self {
        let mut trainer = AdversaryTrainer::new(cfg.augmenter_config());
        let graphs: Vec<GraphInput> = instances.iter().map(graph_of).collect();
        trainer.fit_prenorm(graphs.iter());
        Augmentation { mode: cfg.mode, props: cfg.proportions(), trainer, rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ AUG_STREAM) }
    }

    fn active(&self, epoch: usize, cfg: &RunConfig) -> bool {
        self.mode.augments() && !self.props.is_zero() && epoch >= cfg.schedule.augment_from
    }

    fn propose(&mut self, epoch: usize, instances: &[MilpInstance], k1: usize, audit: &mut Vec<GateRecord>) -> Result<Vec<Proposal>, NnError> {
        let picks = draw(instances.len(), k1, &mut self.rng);
        let mut out = Vec::with_capacity(picks.len());
        for source in picks {
            let inst = &instances[source];
            let graph = Arc::new(graph_of(inst));
            let made = if self.mode == Mode::Ra {
                random_augment(inst, &self.props, self.rng.random()).ok().map(|(i, a)| (i, a, 0.0))
            } else {
                self.trainer.augment(inst, &graph)?
            };
            let Some((instance, action, log_prob)) = made else { continue };
            if action.is_empty() {
                continue;
            }
            let aug_graph = graph_of(&instance);
            let (discriminator, accepted) = if self.mode.learns_augmenter() {
                let d = self.trainer.discriminate(&aug_graph)?;
                (d, gate(d))
            } else {
                (1.0, true)
            };
            audit.push(GateRecord { epoch, instance: source, discriminator, accepted });
            out.push(Proposal { source, graph, action, log_prob, instance, aug_graph, discriminator, accepted });
        }
        Ok(out)
    }

    /// Records rewards, then updates augmenter, value net and discriminator.
    /// Random augmentation learns nothing.
    fn learn(&mut self, proposals: Vec<(Proposal, Option<f64>)>, originals: &[MilpInstance]) -> Result<(), NnError> {
        if !self.mode.learns_augmenter() || proposals.is_empty() {
            return Ok(());
        }
        let mut fresh = 0;
        let mut orig_graphs = Vec::new();
        let mut aug_graphs = Vec::new();
        for (p, reward) in proposals {
            orig_graphs.push(graph_of(&originals[p.source]));
            aug_graphs.push(p.aug_graph);
            if let Some(r) = reward {
                self.trainer.record(p.graph, p.action, p.log_prob, r)?;
                fresh += 1;
            }
        }
        if fresh > 0 {
            self.trainer.update_policy(fresh)?;
        }
        let batch = self.trainer.config.batch.max(1);
        for (o, a) in orig_graphs.chunks(batch).zip(aug_graphs.chunks(batch)) {
            let o: Vec<&GraphInput> = o.iter().collect();
            let a: Vec<&GraphInput> = a.iter().collect();
            self.trainer.update_discriminator(&o, &a)?;
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Algorithm 1 with an imitation-learned policy (modes `il`,
/// `adasolver-il`, `ra`, `reinforce`).
pub fn train_il_mode(cfg: &RunConfig, data: &IlData<'_>) -> Result<TrainOutcome, TrainError> {
    if cfg.mode.is_rl() {
        return Err(TrainError::WrongMode(cfg.mode.name()));
    }
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.mode.augments() {
        cfg.check_training_size(data.instances.len())?;
    }
    let mut net = new_policy(cfg);
    net.fit_prenorm(data.train.iter().map(|e| &e.input));
    let il = IlConfig { seed: cfg.seed, max_epochs: cfg.schedule.epochs, ..cfg.il };
    let mut trainer = IlTrainer::new(net, il);
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_STREAM);
    let mut aug = cfg.mode.augments().then(|| Augmentation::new(cfg, data.instances));
    let mut aug_pool: Vec<Example> = Vec::new();
    let valid: Vec<&Example> = data.valid.iter().collect();
    let mut log = TrainLog { mode: Some(cfg.mode), ..TrainLog::default() };
    let collect_cfg = BnbConfig { node_limit: Some(cfg.schedule.collect_node_limit), ..BnbConfig::default() };

    for epoch in 1..=cfg.schedule.epochs {
        let mut entry = EpochLog { epoch, ..EpochLog::default() };
        let mut pending = Vec::new();
        if let Some(a) = aug.as_mut().filter(|a| a.active(epoch, cfg)) {
            let proposals = a.propose(epoch, data.instances, cfg.schedule.k1, &mut log.gate_audit)?;
            entry.proposed = proposals.len();
            let mut budget = cfg.schedule.k2;
            let mut rewards = Vec::new();
            for p in proposals {
                let seed = a.rng.random();
                let mut examples: Vec<Example> = if budget > 0 {
                    let (recs, _) = run_expert_collect(&p.instance, 1.0, seed, &collect_cfg)?;
                    recs.iter().take(budget).map(Example::new).collect()
                } else {
                    Vec::new()
                };
                budget -= examples.len();
                let mut losses = Vec::with_capacity(examples.len());
                for ex in &examples {
                    let scores = trainer.net.scores(&ex.input)?;
                    losses.push(masked_cross_entropy(&scores, &ex.input.mask, ex.target)?.0);
                }
                let cfg_a = &a.trainer.config;
                let reward = policy_loss_reward(&losses, p.discriminator, cfg_a.beta, cfg_a.discriminator_sign);
                if let Some(r) = reward {
                    rewards.push(r);
                }
                if p.accepted {
                    entry.accepted += 1;
                    entry.augmented_samples += examples.len();
                    aug_pool.append(&mut examples);
                }
                pending.push((p, reward));
            }
            entry.mean_reward = mean(&rewards);
        }

        let mut batch: Vec<&Example> = draw(data.train.len(), cfg.schedule.original_per_epoch, &mut data_rng)
            .into_iter()
            .map(|k| &data.train[k])
            .collect();
        if !aug_pool.is_empty() {
            let a = aug.as_mut().expect("pool implies augmentation");
            let picks = draw(aug_pool.len(), cfg.schedule.augmented_per_epoch, &mut a.rng);
            batch.extend(picks.into_iter().map(|k| &aug_pool[k]));
        }
        let tr = trainer.train_epoch(&batch)?;
        let va = if valid.is_empty() { tr } else { evaluate(&trainer.net, &valid)? };
        if let Some(a) = aug.as_mut() {
            a.learn(pending, data.instances)?;
        }
        let go_on = trainer.end_epoch(tr, va);
        let m = trainer.metrics.last().expect("just recorded");
        entry.train_loss = m.train_loss;
        entry.train_accuracy = m.train_accuracy;
        entry.valid_loss = m.valid_loss;
        entry.valid_accuracy = m.valid_accuracy;
        entry.lr = m.lr;
        log.epochs.push(entry);
        if !go_on {
            break;
        }
    }
    Ok(TrainOutcome { policy: trainer.into_best(), log, adversary: aug.map(|a| a.trainer) })
}

/// Mean node count of greedy policy solves.
pub fn mean_nodes(net: &PolicyNet, instances: &[MilpInstance], node_limit: usize) -> Result<f64, TrainError> {
    let cfg = BnbConfig { node_limit: Some(node_limit), node_selection: NodeSelection::Dfs, ..BnbConfig::default() };
    let mut total = 0.0;
    for inst in instances {
        total += bnb::solve(inst, &mut GnnBranching::greedy(net), &cfg)?.nodes as f64;
    }
    Ok(total / instances.len().max(1) as f64)
}

/// Algorithm 1 with a REINFORCE-trained policy (modes `rl`,
/// `adasolver-rl`). Each epoch runs the agent on `instances_per_epoch`
/// originals; every `rl_augment_every` epochs it also augments `k1`
/// instances and runs on the accepted ones. The augmenter's reward uses
/// `ln(1 + decisions)` of a sampled episode as the policy loss.
pub fn train_rl_mode(cfg: &RunConfig, data: &RlData<'_>) -> Result<TrainOutcome, TrainError> {
    if !cfg.mode.is_rl() {
        return Err(TrainError::WrongMode(cfg.mode.name()));
    }
    cfg.validate()?;
    if data.instances.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    cfg.check_training_size(data.instances.len())?;
    let rl = milpbranch_learn::policy::RlConfig { seed: cfg.seed, node_limit: cfg.limits.node_limit, ..cfg.rl };
    let mut trainer = RlTrainer::new(new_policy(cfg), rl);
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_STREAM);
    let mut aug = cfg.mode.augments().then(|| Augmentation::new(cfg, data.instances));
    let mut log = TrainLog { mode: Some(cfg.mode), ..TrainLog::default() };
    let mut best: Option<(f64, ParamSet)> = None;
    let every = cfg.schedule.rl_augment_every.max(1);

    for epoch in 1..=cfg.schedule.epochs {
        let mut entry = EpochLog { epoch, ..EpochLog::default() };
        let picks = draw(data.instances.len(), cfg.schedule.instances_per_epoch, &mut data_rng);
        let batch: Vec<&MilpInstance> = picks.iter().map(|&k| &data.instances[k]).collect();
        trainer.update(&batch)?;
        let m = *trainer.metrics.last().expect("just updated");
        entry.train_loss = -m.mean_return;
        entry.lr = m.lr;

        if let Some(a) = aug.as_mut().filter(|a| a.active(epoch, cfg) && (epoch - cfg.schedule.augment_from) % every == 0) {
            let proposals = a.propose(epoch, data.instances, cfg.schedule.k1, &mut log.gate_audit)?;
            entry.proposed = proposals.len();
            let mut pending = Vec::new();
            let mut rewards = Vec::new();
            for p in proposals {
                let ep = run_episode(&trainer.net, &p.instance, &trainer.config, a.rng.random())?;
                let f = (1.0 + ep.decisions.len() as f64).ln();
                let r = adversary::reward(f, p.discriminator, a.trainer.config.beta, a.trainer.config.discriminator_sign);
                rewards.push(r);
                pending.push((p, Some(r)));
            }
            entry.mean_reward = mean(&rewards);
            let accepted: Vec<&MilpInstance> = pending.iter().filter(|(p, _)| p.accepted).map(|(p, _)| &p.instance).collect();
            entry.accepted = accepted.len();
            if !accepted.is_empty() {
                trainer.update(&accepted)?;
            }
            a.learn(pending, data.instances)?;
        }

        let valid = if data.valid.is_empty() { -m.mean_return } else { mean_nodes(&trainer.net, data.valid, cfg.limits.node_limit)? };
        entry.valid_loss = valid;
        if best.as_ref().is_none_or(|(b, _)| valid < *b) {
            best = Some((valid, trainer.net.params.clone()));
        }
        log.epochs.push(entry);
    }
    let mut policy = trainer.net;
    if let Some((_, p)) = best {
        policy.params = p;
    }
    Ok(TrainOutcome { policy, log, adversary: aug.map(|a| a.trainer) })
}
