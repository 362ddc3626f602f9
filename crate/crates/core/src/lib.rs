//! Model-based robust training.
//!
//! Classifiers are trained against models of natural variation
//! `G(x, δ)`: analytic transforms (additive noise, rotation, background
//! color, photometric shifts) or translation networks learned from unpaired
//! image domains. The numeric core is generic over [`Scalar`] (f32/f64);
//! the aliases below fix the width for the common cases.

pub mod datakit;
pub mod diffcore;
pub mod error;
pub mod genmodel;
pub mod harness;
pub mod rng;
pub mod robusttrain;
pub mod scalar;
pub mod variation;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Image32 = diffcore::Image<f32>;
pub type Image64 = diffcore::Image<f64>;
pub type Classifier32 = diffcore::Classifier<f32>;
pub type Classifier64 = diffcore::Classifier<f64>;
pub type VariationModel32 = variation::VariationModel<f32>;
pub type VariationModel64 = variation::VariationModel<f64>;
pub type TranslationModel32 = genmodel::TranslationModel<f32>;
pub type TranslationModel64 = genmodel::TranslationModel<f64>;
