//! Experiment configuration, evaluation, orchestration and result output.

pub mod config;
pub mod desk;
pub mod eval;
pub mod experiments;
pub mod results;

pub use config::{train_config_from, ConfigFile, ExperimentConfig, ExperimentKind};
pub use eval::{evaluate, invariance_rate, label_rank, summarize_logits, EvalSummary};
pub use experiments::*;
pub use results::{emit_results, spread, Cell, Plot, Series, Table};
