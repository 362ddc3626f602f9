use std::sync::Arc;

use nuisance::diffcore::{Image, Shape};
use nuisance::genmodel::{into_variation_model, Direction, MunitConfig, TranslationModel};
use nuisance::rng::stream;
use nuisance::variation::{compose, Masking, Norm, NuisanceSpace, PhotometricKind, VariationModel};
use proptest::prelude::*;
use rand::Rng as _;

const SHAPE: Shape = Shape { channels: 3, height: 6, width: 6 };

fn image(seed: u64) -> Image<f64> {
    let mut r = stream(seed, &[]);
    Image::new(SHAPE, (0..SHAPE.len()).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap()
}

fn analytic() -> Vec<VariationModel<f64>> {
    vec![
        VariationModel::additive(8.0 / 255.0, Norm::LInf, SHAPE).unwrap(),
        VariationModel::additive(0.5, Norm::L2, SHAPE).unwrap(),
        VariationModel::rotation(),
        VariationModel::background_color(),
        VariationModel::background_color_with(Masking::AnyChannel),
        VariationModel::photometric(PhotometricKind::Brightness),
        VariationModel::photometric(PhotometricKind::Contrast),
        VariationModel::photometric(PhotometricKind::Hue),
    ]
}

fn learned() -> VariationModel<f64> {
    let cfg = MunitConfig::new(SHAPE, 2, 2, 3);
    let m = TranslationModel::init(cfg, &mut stream(3, &[])).unwrap();
    into_variation_model(Arc::new(m), Direction::AtoB, NuisanceSpace::symmetric(2)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shape_and_range_preserved(seed in 0u64..100_000) {
        let x = image(seed);
        let mut r = stream(seed, &[1]);
        let mut models = analytic();
        models.push(learned());
        models.push(compose(
            VariationModel::photometric(PhotometricKind::Contrast),
            VariationModel::photometric(PhotometricKind::Brightness),
        ).unwrap());
        for m in &models {
            let y = m.apply(&x, &m.sample(&mut r)).unwrap();
            prop_assert_eq!(y.shape(), SHAPE);
            prop_assert!(y.pixels().iter().all(|v| (0.0..=1.0).contains(v)), "{}", m.kind_name());
        }
    }

    #[test]
    fn neutral_elements(seed in 0u64..100_000) {
        let x = image(seed);
        for m in analytic() {
            let origin = m.space().origin();
            let y = m.apply(&x, &origin).unwrap();
            match m.kind_name() {
                "background-color" => {}
                "rotation" => {
                    let err = y.pixels().iter().zip(x.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    prop_assert!(err < 1e-6);
                }
                _ => prop_assert_eq!(&y, &x, "{}", m.kind_name()),
            }
        }
    }

    #[test]
    fn projection_is_feasible_idempotent_and_nearest(
        raw in prop::collection::vec(-5.0f64..5.0, 3),
        lo in prop::collection::vec(-1.0f64..0.0, 3),
        w in prop::collection::vec(0.01f64..2.0, 3),
    ) {
        let hi: Vec<f64> = lo.iter().zip(&w).map(|(a, b)| a + b).collect();
        let s = NuisanceSpace::new(lo.clone(), hi.clone()).unwrap();
        let p = s.project(&raw).unwrap();
        prop_assert!(s.contains(p.values()));
        prop_assert_eq!(s.project(p.values()).unwrap(), p.clone());
        for i in 0..3 {
            // componentwise nearest point of [lo, hi]
            prop_assert_eq!(p.values()[i], raw[i].clamp(lo[i], hi[i]));
        }
    }

    #[test]
    fn composition_is_associative(seed in 0u64..100_000) {
        let b = || VariationModel::<f64>::photometric(PhotometricKind::Brightness);
        let c = || VariationModel::<f64>::photometric(PhotometricKind::Contrast);
        let h = || VariationModel::<f64>::photometric(PhotometricKind::Hue);
        let left = compose(b(), compose(c(), h()).unwrap()).unwrap();
        let right = compose(compose(b(), c()).unwrap(), h()).unwrap();
        let x = image(seed);
        let d = left.sample(&mut stream(seed, &[2]));
        prop_assert_eq!(left.apply(&x, &d).unwrap(), right.apply(&x, &d).unwrap());
    }
}

#[test]
fn descriptors_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut models = analytic();
    models.push(
        VariationModel::compose_independent(
            VariationModel::photometric(PhotometricKind::Contrast),
            VariationModel::background_color(),
        )
        .unwrap(),
    );
    for (i, m) in models.iter().enumerate() {
        let p = dir.path().join(format!("{i}.desc"));
        m.save_descriptor(&p).unwrap();
        let back = VariationModel::<f64>::load_descriptor(&p).unwrap();
        assert_eq!(back.to_descriptor().unwrap(), m.to_descriptor().unwrap());
        let x = image(i as u64);
        let d = m.sample(&mut stream(9, &[i as u64]));
        assert_eq!(back.apply(&x, &d).unwrap(), m.apply(&x, &d).unwrap());
    }
    assert!(VariationModel::<f64>::from_descriptor("kind=rotation\nbogus=1\n", dir.path()).is_err());
}
