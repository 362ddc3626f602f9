//! Models of natural variation `G(x, δ)` over box-shaped nuisance spaces.
//!
//! Every model reads δ through an affine map of its box onto `[−1, 1]^q`
//! and rescales from there to its physical range (angle, RGB, ε-ball,
//! style code).

pub mod analytic;
pub mod descriptor;
pub mod model;
pub mod space;

pub use analytic::{Additive, BackgroundColor, Masking, Norm, Photometric, PhotometricKind, Rotation};
pub use model::{CompositionMode, Learned, ModelKind, VariationModel, DEFAULT_STYLE_SCALE};
pub use space::{NuisanceParam, NuisanceSpace};

use crate::diffcore::image::Shape;
use crate::error::Result;
use crate::scalar::Scalar;

pub fn make_additive<S: Scalar>(epsilon: f64, norm: Norm, shape: Shape) -> Result<VariationModel<S>> {
    VariationModel::additive(epsilon, norm, shape)
}

pub fn make_rotation<S: Scalar>() -> VariationModel<S> {
    VariationModel::rotation()
}

pub fn make_background_color<S: Scalar>() -> VariationModel<S> {
    VariationModel::background_color()
}

pub fn make_photometric<S: Scalar>(kind: PhotometricKind) -> VariationModel<S> {
    VariationModel::photometric(kind)
}

pub fn compose<S: Scalar>(outer: VariationModel<S>, inner: VariationModel<S>) -> Result<VariationModel<S>> {
    VariationModel::compose(outer, inner)
}
