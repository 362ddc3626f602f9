//! Learned models of natural variation: a small unpaired translation
//! network (content/style encoders, decoders, discriminators), its
//! trainer, and the adapter that turns the A→B path into a
//! [`VariationModel`](crate::variation::VariationModel).

pub mod munit;
pub mod train;

use std::sync::Arc;

pub use munit::{
    Direction, Domain, L1Reduction, MunitConfig, MunitHyper, MunitLosses, Part, StylePrior, TranslationModel,
};
pub use train::{
    evaluate_translation, load_translation, read_snapshot_manifest, save_snapshots, save_translation,
    train_translation, Snapshot, TrainedTranslation, SNAPSHOT_MANIFEST,
};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::variation::{Learned, NuisanceSpace, VariationModel, DEFAULT_STYLE_SCALE};

/// `G(x, δ) = Dec_B(content(Enc_A(x)), 2 t(δ))` for A→B, where `t` maps
/// the box onto `[−1, 1]^q`.
pub fn into_variation_model<S: Scalar>(
    model: Arc<TranslationModel<S>>,
    direction: Direction,
    space: NuisanceSpace,
) -> Result<VariationModel<S>> {
    VariationModel::learned(
        Learned {
            model,
            direction,
            style_scale: DEFAULT_STYLE_SCALE,
            source: None,
        },
        space,
    )
}
