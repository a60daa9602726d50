//! Exact MILP solving core: data model, simplex, branch-and-bound with
//! pluggable branching, branching-sample features and instance generators.

pub mod bnb;
pub mod dataset;
pub mod features;
pub mod gen;
pub mod io;
pub mod lp;
pub mod model;

pub use model::{Entry, InstanceGraph, MilpInstance, Sense};
