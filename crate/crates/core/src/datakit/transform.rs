//! Whole-dataset transforms: background recoloring and composed shifts.

use crate::datakit::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};
use crate::scalar::Scalar;
use crate::variation::{BackgroundColor, Masking, NuisanceParam, VariationModel};

/// Background colors, 0–255 RGB.
#[derive(Clone, Debug, PartialEq)]
pub enum BackgroundFill {
    Uniform([u8; 3]),
    PerItem(Vec<[u8; 3]>),
}

/// Replaces background pixels (at or below the threshold under `masking`)
/// with the given color(s) through the background-color model.
pub fn colorize_background_with<S: Scalar>(
    data: &Dataset<S>,
    fill: &BackgroundFill,
    masking: Masking,
) -> Result<Dataset<S>> {
    if let BackgroundFill::PerItem(c) = fill {
        if c.len() != data.len() {
            return Err(Error::input(format!("{} colors for {} images", c.len(), data.len())));
        }
    }
    let model = VariationModel::<S>::background_color_with(masking);
    let delta = |rgb: [u8; 3]| {
        let t = BackgroundColor::t_for_rgb(rgb.map(f64::from));
        model.space().param(t.to_vec())
    };
    let out = data.map_images(|i, x| {
        let rgb = match fill {
            BackgroundFill::Uniform(c) => *c,
            BackgroundFill::PerItem(c) => c[i],
        };
        model.apply(x, &delta(rgb)?)
    })?;
    let note = match fill {
        BackgroundFill::Uniform([r, g, b]) => format!("background rgb({r},{g},{b})"),
        BackgroundFill::PerItem(_) => "background per-item colors".to_string(),
    };
    Ok(out.with_provenance(format!("{} | {note}", data.provenance)))
}

/// [`colorize_background_with`] using the default all-channel mask.
pub fn colorize_background<S: Scalar>(data: &Dataset<S>, fill: &BackgroundFill) -> Result<Dataset<S>> {
    colorize_background_with(data, fill, Masking::AllChannels)
}

/// How each transform's δ is chosen per item.
#[derive(Clone, Debug, PartialEq)]
pub enum DeltaPolicy {
    Fixed(NuisanceParam, NuisanceParam),
    /// Independent uniform draws from each model's box.
    Uniform { seed: u64 },
}

/// Applies `first` then `second` to every item.
pub fn build_composed_testset<S: Scalar>(
    data: &Dataset<S>,
    first: &VariationModel<S>,
    second: &VariationModel<S>,
    policy: &DeltaPolicy,
) -> Result<Dataset<S>> {
    if let Some(shape) = data.shape() {
        for m in [first, second] {
            if let Some(s) = m.fixed_shape() {
                if s != shape {
                    return Err(Error::input(format!("{} model expects {s}, data has {shape}", m.kind_name())));
                }
            }
        }
    }
    let out = data.map_images(|i, x| {
        let (d1, d2) = match policy {
            DeltaPolicy::Fixed(a, b) => (a.clone(), b.clone()),
            DeltaPolicy::Uniform { seed } => (
                first.sample(&mut stream(*seed, &[purpose::NUISANCE, i as u64, 0])),
                second.sample(&mut stream(*seed, &[purpose::NUISANCE, i as u64, 1])),
            ),
        };
        second.apply(&first.apply(x, &d1)?, &d2)
    })?;
    let how = match policy {
        DeltaPolicy::Fixed(a, b) => format!("δ1={:?} δ2={:?}", a.values(), b.values()),
        DeltaPolicy::Uniform { seed } => format!("uniform δ, seed {seed}"),
    };
    let describe = |m: &VariationModel<S>| {
        m.to_descriptor()
            .map(|d| d.trim_end().replace('\n', ";"))
            .unwrap_or_else(|_| m.kind_name().to_string())
    };
    Ok(out.with_provenance(format!(
        "{} | {} then {} ({how})",
        data.provenance,
        describe(first),
        describe(second)
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::metrics::{brightness_metric, contrast_metric};
    use crate::diffcore::{Image, Shape};
    use crate::variation::PhotometricKind;

    fn digitish() -> Dataset<f64> {
        let s = Shape::new(3, 4, 4);
        let mut px = vec![0.0; s.len()];
        for c in 0..3 {
            px[c * 16 + 5] = 0.9;
            px[c * 16 + 6] = 0.6;
        }
        Dataset::labeled(vec![Image::new(s, px).unwrap()], vec![3], "d").unwrap()
    }

    #[test]
    fn black_fill_is_identity_on_black_backgrounds() {
        let d = digitish();
        assert_eq!(colorize_background(&d, &BackgroundFill::Uniform([0, 0, 0])).unwrap().images(), d.images());
    }

    #[test]
    fn blue_fill_keeps_foreground() {
        let d = digitish();
        let b = colorize_background(&d, &BackgroundFill::Uniform([0, 0, 255])).unwrap();
        let (x, y) = (d.image(0), b.image(0));
        for i in 0..16 {
            let fg = x.pixels()[i] > 12.0 / 255.0;
            if fg {
                assert_eq!((0..3).map(|c| y.get(c, i / 4, i % 4)).collect::<Vec<_>>(), (0..3).map(|c| x.get(c, i / 4, i % 4)).collect::<Vec<_>>());
            } else {
                assert_eq!([y.get(0, i / 4, i % 4), y.get(1, i / 4, i % 4), y.get(2, i / 4, i % 4)], [0.0, 0.0, 1.0]);
            }
        }
        assert_eq!(b.labels().unwrap(), &[3]);
    }

    #[test]
    fn composed_affine_hand_computation() {
        let s = Shape::new(3, 2, 2);
        let d = Dataset::labeled(vec![Image::filled(s, 0.5f64).unwrap()], vec![0], "c").unwrap();
        let bright = VariationModel::photometric(PhotometricKind::Brightness);
        let contrast = VariationModel::photometric(PhotometricKind::Contrast);
        // +0.2 brightness is t = 0.4 at strength 0.5; ×2 contrast is t = 1
        let p = DeltaPolicy::Fixed(bright.space().param(vec![0.4]).unwrap(), contrast.space().param(vec![1.0]).unwrap());
        let out = build_composed_testset(&d, &bright, &contrast, &p).unwrap();
        for &v in out.image(0).pixels() {
            assert!((v - 0.7).abs() < 1e-12);
        }
        let id = VariationModel::identity(1);
        let same = build_composed_testset(&d, &id, &id, &DeltaPolicy::Uniform { seed: 3 }).unwrap();
        assert_eq!(same.images(), d.images());
    }

    #[test]
    fn composed_shift_raises_both_metrics() {
        let d = digitish();
        let bright = VariationModel::photometric(PhotometricKind::Brightness);
        let contrast = VariationModel::photometric(PhotometricKind::Contrast);
        let p = DeltaPolicy::Fixed(bright.space().param(vec![0.2]).unwrap(), contrast.space().param(vec![0.5]).unwrap());
        let out = build_composed_testset(&d, &bright, &contrast, &p).unwrap();
        assert!(brightness_metric(out.image(0)) > brightness_metric(d.image(0)));
        assert!(contrast_metric(out.image(0)) > contrast_metric(d.image(0)));
    }
}
