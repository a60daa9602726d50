//! Training orchestration, evaluation campaigns and metrics for learned
//! MILP branching.

pub mod config;
pub mod eval;
pub mod metrics;
pub mod pipeline;
pub mod train;

pub use config::{Mode, RunConfig};
pub use eval::{emit_report, evaluate, EvalReport, EvalSettings, Method};
pub use metrics::{pd_gap, pd_integral, Clock, GapCap};
pub use train::{train_il_mode, train_rl_mode, TrainLog, TrainOutcome};
