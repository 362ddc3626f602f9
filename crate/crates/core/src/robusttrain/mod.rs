//! Robust training algorithms: ERM, PGD adversarial training and the
//! model-based MRT (worst-of-k sampling), MAT (projected ascent on δ) and
//! MDA (random augmentation), plus a grid oracle for the inner maximum.

pub mod config;
pub mod inner;
pub mod train;

pub use config::{AscentStep, Algorithm, Granularity, MdaReduction, PgdConfig, TrainConfig};
pub use inner::{
    brute_force_inner, default_mat_alpha, mat_ascent, mda_augment, model_loss, mrt_select, pgd_batch, pgd_inner,
    select_max, InnerResult, OracleResult,
};
pub use train::{
    erm_train, format_metrics, model_train, pgd_train, read_metrics_log, step_gradient, train, write_metrics_log,
    BatchKey, EpochLog, StepGradient, TrainReport, METRICS_HEADER,
};
