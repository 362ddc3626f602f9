//! Minimal differentiable numerics: layer stacks with hand-written
//! backward passes, cross-entropy, update rules and checkpoints.

pub mod arch;
pub mod checkpoint;
pub mod classifier;
pub mod gradcheck;
pub mod image;
pub mod loss;
pub mod network;
pub mod optim;

pub use arch::{Architecture, Layer};
pub use checkpoint::{load_classifier, save_classifier, Checkpoint, Section};
pub use classifier::{forward_classifier, grad_input, grad_params, Classifier};
pub use image::{Batch, Image, Shape};
pub use loss::{cross_entropy, cross_entropy_grad, loss_ce, CeLoss, Logits};
pub use network::{Mode, Network, Trace};
pub use optim::{update_step, LrSchedule, OptimConfig, OptimState, UpdateRule};
