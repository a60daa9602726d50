//! A three-context masking bandit with a hand-enumerable optimum, used to
//! sanity-check the augmenter's policy-gradient trainers.
//!
//! Each context is a one-variable, one-constraint graph. The action is
//! whether to mask the variable, drawn from the augmenter's Bernoulli head.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{AdversaryTrainer, AugmenterConfig, Proportions, MAX_PROPORTION};
use crate::gnn::GraphInput;
use crate::nn::{sigmoid, EdgeList, Mat, NnError};

/// `REWARDS[c] = [reward if kept, reward if masked]`.
pub const REWARDS: [[f64; 2]; 3] = [[0.0, 1.0], [1.0, 0.2], [0.3, 0.8]];

pub struct ToyBandit {
    pub contexts: Vec<Arc<GraphInput>>,
}

impl Default for ToyBandit {
    fn default() -> Self {
        Self::new()
    }
}

impl ToyBandit {
    pub fn new() -> Self {
        let contexts = (0..REWARDS.len())
            .map(|c| {
                let mut var = Mat::zeros((1, 9));
                var[(0, 0)] = 1.0;
                var[(0, 1)] = c as f64 - 1.0;
                var[(0, 2)] = if c == 2 { 1.0 } else { 0.0 };
                Arc::new(GraphInput {
                    var,
                    cons: Mat::from_elem((1, 1), 1.0),
                    edges: EdgeList { target: vec![0], source: vec![0], value: vec![1.0] },
                })
            })
            .collect();
        ToyBandit { contexts }
    }

    pub fn proportions() -> Proportions {
        Proportions { vars: MAX_PROPORTION, cons: 0.0, edges: 0.0 }
    }

    /// Best expected reward, averaged over uniformly drawn contexts.
    pub fn optimal() -> f64 {
        REWARDS.iter().map(|r| r[0].max(r[1])).sum::<f64>() / REWARDS.len() as f64
    }

    pub fn reward(context: usize, masked: bool) -> f64 {
        REWARDS[context][usize::from(masked)]
    }

    /// Exact expected reward of the augmenter's current Bernoulli policy.
    pub fn expected_reward(&self, trainer: &AdversaryTrainer) -> Result<f64, NnError> {
        let mut total = 0.0;
        for (c, g) in self.contexts.iter().enumerate() {
            let q = sigmoid(trainer.augmenter.logits(g)?.vars[0]);
            total += q * REWARDS[c][1] + (1.0 - q) * REWARDS[c][0];
        }
        Ok(total / self.contexts.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditRun {
    /// Expected reward before the first update and after each update.
    pub curve: Vec<f64>,
    /// First update after which the expected reward reached the target.
    pub updates_to_target: Option<usize>,
}

/// Trains with `config` (its proportions are overridden) for at most
/// `max_updates` updates, drawing one action per context per update, and
/// stops once the expected reward reaches `target_fraction * optimal`.
pub fn run_bandit(mut config: AugmenterConfig, max_updates: usize, target_fraction: f64) -> Result<BanditRun, NnError> {
    config.proportions = ToyBandit::proportions();
    let bandit = ToyBandit::new();
    let mut trainer = AdversaryTrainer::new(config);
    trainer.fit_prenorm(bandit.contexts.iter().map(|g| g.as_ref()));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0xba4d17));
    let target = target_fraction * ToyBandit::optimal();
    let mut curve = vec![bandit.expected_reward(&trainer)?];
    for update in 1..=max_updates {
        for (c, g) in bandit.contexts.iter().enumerate() {
            let (a, lp) = trainer.augmenter.sample(g, &config.proportions, &mut rng)?;
            let r = ToyBandit::reward(c, !a.vars.is_empty());
            trainer.record(g.clone(), a, lp, r)?;
        }
        trainer.update_policy(bandit.contexts.len())?;
        let v = bandit.expected_reward(&trainer)?;
        curve.push(v);
        if v >= target {
            return Ok(BanditRun { curve, updates_to_target: Some(update) });
        }
    }
    Ok(BanditRun { curve, updates_to_target: None })
}
