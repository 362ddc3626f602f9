//! Small synthetic stand-ins for the benchmark shifts, sized to train on a
//! single CPU core in seconds. Every builder is a pure function of its seed.

use std::sync::Arc;

use crate::datakit::{
    build_composed_testset, colorize_background, dim_digits, seven_segment_digits, shape_domain, BackgroundFill,
    Dataset, DeltaPolicy, ShapeDomain, SHAPE_CLASSES, SHAPE_SHAPE,
};
use crate::error::Result;
use crate::genmodel::{into_variation_model, train_translation, Direction, MunitConfig, MunitHyper, TrainedTranslation};
use crate::scalar::Scalar;
use crate::variation::{Masking, NuisanceSpace, PhotometricKind, VariationModel};

/// A training domain, named test domains and the model of natural variation.
#[derive(Clone, Debug)]
pub struct Task<S> {
    pub name: &'static str,
    pub train: Dataset<S>,
    /// The first entry is the shifted domain.
    pub tests: Vec<(String, Dataset<S>)>,
    pub model: VariationModel<S>,
    pub classes: usize,
}

impl<S> Task<S> {
    pub fn test_refs(&self) -> Vec<(&str, &Dataset<S>)> {
        self.tests.iter().map(|(n, d)| (n.as_str(), d)).collect()
    }
}

/// Digits on blue backgrounds for training, the same test digits on red
/// (shifted) and blue (source); the model recolors the background.
pub fn background_task<S: Scalar>(n_train: usize, n_test: usize, seed: u64) -> Result<Task<S>> {
    let train = colorize_background(&seven_segment_digits::<S>(n_train, 100 + seed)?, &BackgroundFill::Uniform([0, 0, 255]))?;
    let src = seven_segment_digits::<S>(n_test, 900 + seed)?;
    let red = colorize_background(&src, &BackgroundFill::Uniform([255, 0, 0]))?;
    let blue = colorize_background(&src, &BackgroundFill::Uniform([0, 0, 255]))?;
    Ok(Task {
        name: "background",
        train,
        tests: vec![("red".into(), red), ("blue".into(), blue)],
        model: VariationModel::background_color_with(Masking::AnyChannel),
        classes: 10,
    })
}

/// Dim low-contrast digits for training; the shifted test set applies
/// brightness then contrast with per-item random strengths. The model is
/// the independent composition of the two photometric models.
pub fn composed_task<S: Scalar>(n_train: usize, n_test: usize, seed: u64) -> Result<Task<S>> {
    let train = dim_digits::<S>(n_train, 100 + seed)?;
    let src = dim_digits::<S>(n_test, 900 + seed)?;
    let b = VariationModel::<S>::photometric(PhotometricKind::Brightness);
    let c = VariationModel::<S>::photometric(PhotometricKind::Contrast);
    let b_shift = b.clone().with_space(NuisanceSpace::new(vec![0.4], vec![0.8])?)?;
    let c_shift = c.clone().with_space(NuisanceSpace::new(vec![0.6], vec![1.0])?)?;
    let shifted = build_composed_testset(&src, &b_shift, &c_shift, &DeltaPolicy::Uniform { seed: 77 + seed })?;
    Ok(Task {
        name: "composed",
        train,
        tests: vec![("shifted".into(), shifted), ("source".into(), src)],
        model: VariationModel::compose_independent(c, b)?,
        classes: 10,
    })
}

/// Unpaired shape domains for learning a translation model.
#[derive(Clone, Debug)]
pub struct ShapeTask<S> {
    pub a: Dataset<S>,
    pub b: Dataset<S>,
    pub test_b: Dataset<S>,
    pub config: MunitConfig,
    pub hyper: MunitHyper,
}

pub fn shape_task<S: Scalar>(n: usize, n_test: usize, iterations: usize) -> Result<ShapeTask<S>> {
    let hyper = MunitHyper {
        iterations,
        lr: 1e-3,
        snapshots: vec![10.min(iterations), iterations / 4, iterations],
        ..MunitHyper::default()
    };
    Ok(ShapeTask {
        a: shape_domain(ShapeDomain::A, n, 1)?,
        b: shape_domain(ShapeDomain::B, n, 2)?,
        test_b: shape_domain(ShapeDomain::B, n_test, 3)?,
        config: MunitConfig::new(SHAPE_SHAPE, 4, 2, 8),
        hyper,
    })
}

impl<S: Scalar> ShapeTask<S> {
    pub fn learn(&self, seed: u64) -> Result<TrainedTranslation<S>> {
        train_translation(self.a.images(), self.b.images(), self.config, &self.hyper, seed)
    }

    /// Classification task using the final model of `trained`.
    pub fn task(&self, trained: &TrainedTranslation<S>) -> Result<Task<S>> {
        Ok(Task {
            name: "shapes",
            train: self.a.clone(),
            tests: vec![("shifted".into(), self.test_b.clone()), ("source".into(), self.a.clone())],
            model: into_variation_model(Arc::new(trained.model.clone()), Direction::AtoB, NuisanceSpace::symmetric(2))?,
            classes: SHAPE_CLASSES,
        })
    }
}
