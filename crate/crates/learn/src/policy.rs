//! The learned branching policy: scoring, greedy or sampled branching
//! inside the B&B engine, imitation learning and REINFORCE.

use milpbranch_core::bnb::{self, BnbConfig, BnbResult, BranchContext, BranchingPolicy, ExpertRecord, NodeSelection, SolveError};
use milpbranch_core::features::BranchSample;
use milpbranch_core::MilpInstance;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gnn::{PolicyNet, SampleInput};
use crate::nn::{masked_cross_entropy, masked_softmax, Adam, Grads, NnError, ParamSet};

/// Probabilities over all variables, zero off the candidate set.
pub fn score(net: &PolicyNet, sample: &BranchSample) -> Result<Vec<f64>, NnError> {
    let x = SampleInput::new(sample);
    masked_softmax(&net.scores(&x)?, &x.mask)
}

/// Highest-scoring candidate, lowest index on ties.
pub fn act(net: &PolicyNet, sample: &BranchSample) -> Result<usize, NnError> {
    let x = SampleInput::new(sample);
    greedy(&net.scores(&x)?, &x.mask)
}

fn greedy(scores: &[f64], mask: &[bool]) -> Result<usize, NnError> {
    let mut best: Option<usize> = None;
    for (j, (&s, &m)) in scores.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|b| s > scores[b]) {
            best = Some(j);
        }
    }
    best.ok_or(NnError::EmptyMask)
}

fn sample_index(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &pj) in p.iter().enumerate() {
        if pj > 0.0 {
            acc += pj;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

/// One decision of a sampled episode.
#[derive(Debug, Clone)]
pub struct Decision {
    pub input: SampleInput,
    pub action: usize,
}

/// Branching with the GNN: greedy for evaluation, sampled for RL.
pub struct GnnBranching<'n> {
    net: &'n PolicyNet,
    rng: Option<ChaCha8Rng>,
    pub trajectory: Vec<Decision>,
}

impl<'n> GnnBranching<'n> {
    pub fn greedy(net: &'n PolicyNet) -> Self {
        GnnBranching { net, rng: None, trajectory: Vec::new() }
    }

    pub fn sampling(net: &'n PolicyNet, seed: u64) -> Self {
        GnnBranching { net, rng: Some(ChaCha8Rng::seed_from_u64(seed)), trajectory: Vec::new() }
    }
}

impl BranchingPolicy for GnnBranching<'_> {
    fn select(&mut self, ctx: &mut BranchContext<'_, '_>) -> Result<usize, SolveError> {
        let x = SampleInput::new(&ctx.sample());
        let scores = self.net.scores(&x).map_err(|e| SolveError::Policy(e.to_string()))?;
        let action = match &mut self.rng {
            None => greedy(&scores, &x.mask),
            Some(rng) => masked_softmax(&scores, &x.mask).map(|p| sample_index(&p, rng)),
        }
        .map_err(|e| SolveError::Policy(e.to_string()))?;
        if self.rng.is_some() {
            self.trajectory.push(Decision { input: x, action });
        }
        Ok(action)
    }
}

/// An expert decision prepared for training.
#[derive(Debug, Clone)]
pub struct Example {
    pub input: SampleInput,
    pub target: usize,
    /// Candidates whose expert score ties the maximum (always contains
    /// `target`). A prediction counts as correct when it lands here.
    pub best: Vec<usize>,
}

/// Relative tolerance for treating two expert scores as tied.
pub const SCORE_TIE_TOL: f64 = 1e-9;

impl Example {
    pub fn new(rec: &ExpertRecord) -> Self {
        let top = rec.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cut = top - SCORE_TIE_TOL * top.abs().max(1e-12);
        let mut best: Vec<usize> =
            rec.candidates.iter().zip(&rec.scores).filter(|(_, &s)| s >= cut).map(|(&c, _)| c).collect();
        if !best.contains(&rec.action) {
            best.push(rec.action);
        }
        Example { input: SampleInput::new(&rec.sample), target: rec.action, best }
    }

    pub fn is_hit(&self, choice: usize) -> bool {
        self.best.contains(&choice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IlConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before the learning rate is
    /// divided by `lr_divisor`.
    pub patience: usize,
    pub lr_divisor: f64,
    /// Epochs without validation improvement before training stops.
    pub early_stop: usize,
    pub seed: u64,
}

impl Default for IlConfig {
    fn default() -> Self {
        IlConfig { lr: 1e-3, batch: 8, max_epochs: 1000, patience: 10, lr_divisor: 5.0, early_stop: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    pub lr: f64,
}

/// Mean cross-entropy and top-1 accuracy.
pub fn evaluate(net: &PolicyNet, examples: &[&Example]) -> Result<(f64, f64), NnError> {
    if examples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut loss, mut hits) = (0.0, 0usize);
    for ex in examples {
        let scores = net.scores(&ex.input)?;
        loss += masked_cross_entropy(&scores, &ex.input.mask, ex.target)?.0;
        hits += usize::from(ex.is_hit(greedy(&scores, &ex.input.mask)?));
    }
    let n = examples.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Mean cross-entropy over `batch` and its parameter gradient.
pub fn il_gradient(net: &PolicyNet, batch: &[&Example]) -> Result<(f64, Grads), NnError> {
    let mut total = net.params.zero_grads();
    let mut loss = 0.0;
    for ex in batch {
        let (scores, cache) = net.forward(&ex.input)?;
        let (l, d) = masked_cross_entropy(&scores, &ex.input.mask, ex.target)?;
        loss += l;
        total.add_assign(&net.backward(&cache, &d).params);
    }
    let k = batch.len().max(1) as f64;
    total.scale(1.0 / k);
    Ok((loss / k, total))
}

/// Epoch-level imitation trainer with the plateau schedule and
/// best-validation tracking.
pub struct IlTrainer {
    pub net: PolicyNet,
    pub config: IlConfig,
    adam: Adam,
    rng: ChaCha8Rng,
    best: Option<(f64, ParamSet)>,
    stale: usize,
    pub epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

impl IlTrainer {
    pub fn new(net: PolicyNet, config: IlConfig) -> Self {
        let adam = Adam::new(&net.params, config.lr);
        IlTrainer { net, config, adam, rng: ChaCha8Rng::seed_from_u64(config.seed), best: None, stale: 0, epoch: 0, metrics: Vec::new() }
    }

    pub fn lr(&self) -> f64 {
        self.adam.lr
    }

    /// One shuffled pass; returns mean batch loss and accuracy measured
    /// before each update.
    pub fn train_epoch(&mut self, examples: &[&Example]) -> Result<(f64, f64), NnError> {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut loss, mut hits) = (0.0, 0usize);
        for chunk in order.chunks(self.config.batch.max(1)) {
            let batch: Vec<&Example> = chunk.iter().map(|&k| examples[k]).collect();
            let mut g = self.net.params.zero_grads();
            for ex in &batch {
                let (scores, cache) = self.net.forward(&ex.input)?;
                let (l, d) = masked_cross_entropy(&scores, &ex.input.mask, ex.target)?;
                loss += l;
                hits += usize::from(ex.is_hit(greedy(&scores, &ex.input.mask)?));
                g.add_assign(&self.net.backward(&cache, &d).params);
            }
            g.scale(1.0 / batch.len() as f64);
            self.adam.step(&mut self.net.params, &g)?;
        }
        let n = examples.len().max(1) as f64;
        Ok((loss / n, hits as f64 / n))
    }

    /// Records validation results; returns `false` once training should stop.
    pub fn end_epoch(&mut self, train: (f64, f64), valid: (f64, f64)) -> bool {
        self.epoch += 1;
        self.metrics.push(EpochMetrics {
            epoch: self.epoch,
            train_loss: train.0,
            train_accuracy: train.1,
            valid_loss: valid.0,
            valid_accuracy: valid.1,
            lr: self.adam.lr,
        });
        if self.best.as_ref().is_none_or(|(b, _)| valid.0 < *b) {
            self.best = Some((valid.0, self.net.params.clone()));
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale % self.config.patience.max(1) == 0 {
                self.adam.lr /= self.config.lr_divisor;
            }
        }
        self.stale < self.config.early_stop && self.epoch < self.config.max_epochs
    }

    /// The network with the best-validation parameters.
    pub fn into_best(self) -> PolicyNet {
        let mut net = self.net;
        if let Some((_, p)) = self.best {
            net.params = p;
        }
        net
    }
}

/// Plain imitation learning: fits prenorm on the training inputs, then runs
/// epochs until the schedule stops. Returns the best-validation network.
pub fn train_il(
    mut net: PolicyNet,
    train: &[Example],
    valid: &[Example],
    config: IlConfig,
) -> Result<(PolicyNet, Vec<EpochMetrics>), NnError> {
    if train.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    net.fit_prenorm(train.iter().map(|e| &e.input));
    let train: Vec<&Example> = train.iter().collect();
    let valid: Vec<&Example> = valid.iter().collect();
    let mut t = IlTrainer::new(net, config);
    loop {
        let tr = t.train_epoch(&train)?;
        let va = if valid.is_empty() { tr } else { evaluate(&t.net, &valid)? };
        if !t.end_epoch(tr, va) {
            break;
        }
    }
    let metrics = t.metrics.clone();
    Ok((t.into_best(), metrics))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub lr: f64,
    /// Episodes per update.
    pub batch: usize,
    pub gamma: f64,
    /// Reward for every branching decision.
    pub step_reward: f64,
    pub entropy_coef: f64,
    pub node_limit: usize,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig { lr: 1e-6, batch: 8, gamma: 1.0, step_reward: -1.0, entropy_coef: 1e-2, node_limit: 20_000, seed: 0 }
    }
}

/// One sampled B&B run.
#[derive(Debug, Clone)]
pub struct Episode {
    pub decisions: Vec<Decision>,
    /// Discounted return from every decision onwards.
    pub returns: Vec<f64>,
    /// Node cap reached before the search completed.
    pub hit_limit: bool,
    pub result: BnbResult,
}

impl Episode {
    pub fn total_return(&self) -> f64 {
        self.returns.first().copied().unwrap_or(0.0)
    }
}

/// Runs the policy in sampling mode under DFS.
pub fn run_episode(net: &PolicyNet, inst: &MilpInstance, config: &RlConfig, seed: u64) -> Result<Episode, SolveError> {
    let bnb_cfg = BnbConfig { node_limit: Some(config.node_limit), node_selection: NodeSelection::Dfs, ..BnbConfig::default() };
    let mut pol = GnnBranching::sampling(net, seed);
    let result = bnb::solve(inst, &mut pol, &bnb_cfg)?;
    let decisions = pol.trajectory;
    let mut returns = vec![0.0; decisions.len()];
    let mut acc = 0.0;
    for t in (0..decisions.len()).rev() {
        acc = config.step_reward + config.gamma * acc;
        returns[t] = acc;
    }
    let hit_limit = matches!(result.status, bnb::BnbStatus::Feasible | bnb::BnbStatus::NoSolution);
    Ok(Episode { decisions, returns, hit_limit, result })
}

/// Gradient of `-(G - b) log pi(a|s) - c H(pi(.|s))` summed over the
/// decisions of `episodes` and divided by the episode count.
pub fn reinforce_gradient(net: &PolicyNet, episodes: &[Episode], baseline: f64, entropy_coef: f64) -> Result<Grads, NnError> {
    let mut g = net.params.zero_grads();
    for ep in episodes {
        for (d, &ret) in ep.decisions.iter().zip(&ep.returns) {
            let (scores, cache) = net.forward(&d.input)?;
            let p = masked_softmax(&scores, &d.input.mask)?;
            let h: f64 = -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>();
            let adv = ret - baseline;
            let ds: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(k, &pk)| {
                    let onehot = if k == d.action { 1.0 } else { 0.0 };
                    let ent = if pk > 0.0 { entropy_coef * pk * (pk.ln() + h) } else { 0.0 };
                    adv * (pk - onehot) + ent
                })
                .collect();
            g.add_assign(&net.backward(&cache, &ds).params);
        }
    }
    g.scale(1.0 / episodes.len().max(1) as f64);
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlMetrics {
    pub update: usize,
    pub mean_return: f64,
    pub mean_decisions: f64,
    pub baseline: f64,
    pub lr: f64,
}

/// Episodic REINFORCE with a running-mean return baseline.
pub struct RlTrainer {
    pub net: PolicyNet,
    pub config: RlConfig,
    adam: Adam,
    rng: ChaCha8Rng,
    baseline_sum: f64,
    baseline_count: f64,
    pub metrics: Vec<RlMetrics>,
}

impl RlTrainer {
    pub fn new(net: PolicyNet, config: RlConfig) -> Self {
        let adam = Adam::new(&net.params, config.lr);
        RlTrainer { net, config, adam, rng: ChaCha8Rng::seed_from_u64(config.seed), baseline_sum: 0.0, baseline_count: 0.0, metrics: Vec::new() }
    }

    pub fn baseline(&self) -> f64 {
        if self.baseline_count == 0.0 {
            0.0
        } else {
            self.baseline_sum / self.baseline_count
        }
    }

    /// Collects one episode per instance and applies one update.
    pub fn update(&mut self, instances: &[&MilpInstance]) -> Result<Vec<Episode>, RlError> {
        let mut episodes = Vec::with_capacity(instances.len());
        for inst in instances {
            let seed = self.rng.random();
            episodes.push(run_episode(&self.net, inst, &self.config, seed)?);
        }
        let baseline = self.baseline();
        let g = reinforce_gradient(&self.net, &episodes, baseline, self.config.entropy_coef)?;
        self.adam.step(&mut self.net.params, &g)?;
        for ep in &episodes {
            for r in &ep.returns {
                self.baseline_sum += r;
                self.baseline_count += 1.0;
            }
        }
        let k = episodes.len().max(1) as f64;
        self.metrics.push(RlMetrics {
            update: self.metrics.len() + 1,
            mean_return: episodes.iter().map(Episode::total_return).sum::<f64>() / k,
            mean_decisions: episodes.iter().map(|e| e.decisions.len() as f64).sum::<f64>() / k,
            baseline,
            lr: self.adam.lr,
        });
        Ok(episodes)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RlError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Trains for `updates` rounds, each drawing `config.batch` instances.
pub fn train_rl(net: PolicyNet, instances: &[MilpInstance], updates: usize, config: RlConfig) -> Result<(PolicyNet, Vec<RlMetrics>), RlError> {
    let mut t = RlTrainer::new(net, config);
    let mut draw = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9);
    for _ in 0..updates {
        let batch: Vec<&MilpInstance> = (0..config.batch.max(1)).map(|_| &instances[draw.random_range(0..instances.len())]).collect();
        t.update(&batch)?;
    }
    Ok((t.net, t.metrics))
}
