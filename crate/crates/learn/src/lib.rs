//! Learned components for branch-and-bound: a small neural toolkit, the
//! bipartite GNN branching policy and the adversarial instance augmenter.

pub mod adversary;
pub mod bandit;
pub mod gnn;
pub mod nn;
pub mod policy;
