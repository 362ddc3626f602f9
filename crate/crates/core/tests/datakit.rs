use nuisance::datakit::{
    build_composed_testset, colorize_background, decode_images, encode_images, load_dataset, load_idx, save_dataset,
    save_idx, seven_segment_digits, threshold_split, Band, Bands, BackgroundFill, Dataset, DeltaPolicy, Metric,
};
use nuisance::diffcore::{Image, Shape};
use nuisance::variation::{PhotometricKind, VariationModel};
use proptest::prelude::*;

fn byte_dataset(bytes: &[Vec<u8>], shape: Shape) -> Dataset<f32> {
    let images = bytes.iter().map(|b| Image::from_bytes(shape, b).unwrap()).collect();
    Dataset::labeled(images, (0..bytes.len()).map(|i| i % 7).collect(), "prop").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splits_are_sound_and_disjoint(
        bytes in prop::collection::vec(prop::collection::vec(any::<u8>(), 12), 1..40),
        cuts in prop::collection::vec(0.0f64..255.0, 4),
        contrast in any::<bool>(),
    ) {
        let mut c = cuts.clone();
        c.sort_by(f64::total_cmp);
        let bands = Bands {
            low: Band { lower: None, upper: Some(c[0]) },
            medium: Band { lower: Some(c[1]), upper: Some(c[2]) },
            high: Band { lower: Some(c[3]), upper: None },
        };
        let data = byte_dataset(&bytes, Shape::new(3, 2, 2));
        let metric = if contrast { Metric::Contrast } else { Metric::Brightness };
        let split = threshold_split(&data, metric, bands).unwrap();
        let mut seen = vec![false; data.len()];
        for (band, idx) in [bands.low, bands.medium, bands.high].iter().zip(&split.indices) {
            for &i in idx {
                prop_assert!(band.contains(metric.eval(data.image(i))));
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
            // members keep their order and labels
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert_eq!(&split.low.labels().unwrap().to_vec(), &split.indices[0].iter().map(|&i| data.labels().unwrap()[i]).collect::<Vec<_>>());
    }

    #[test]
    fn idx_round_trip_is_lossless(
        bytes in prop::collection::vec(prop::collection::vec(any::<u8>(), 27), 1..10),
        gray in any::<bool>(),
    ) {
        let shape = Shape::new(3, 3, 3);
        let bytes: Vec<Vec<u8>> = if gray {
            bytes.iter().map(|b| { let p = &b[..9]; p.iter().chain(p).chain(p).copied().collect() }).collect()
        } else {
            bytes
        };
        let data = byte_dataset(&bytes, shape);
        let enc = encode_images(data.images()).unwrap();
        prop_assert_eq!(u32::from_be_bytes([enc[0], enc[1], enc[2], enc[3]]), if gray { 0x803 } else { 0x804 });
        let back: Vec<Image<f32>> = decode_images(&enc).unwrap();
        prop_assert_eq!(&back[..], data.images());
    }

    #[test]
    fn truncation_reports_the_offset(n in 1usize..6, cut in 1usize..20) {
        let data = seven_segment_digits::<f32>(n, 4).unwrap();
        let enc = encode_images(data.images()).unwrap();
        let cut = cut.min(enc.len() - 1);
        let short = &enc[..enc.len() - cut];
        match decode_images::<f32>(short) {
            Err(nuisance::Error::Format { offset, .. }) => prop_assert!(offset as usize <= short.len()),
            other => prop_assert!(false, "expected a format error, got {:?}", other.map(|v| v.len())),
        }
    }
}

#[test]
fn files_round_trip_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = colorize_background(&seven_segment_digits::<f32>(30, 2).unwrap(), &BackgroundFill::Uniform([0, 0, 255])).unwrap();
    let (im, lb) = (dir.path().join("x-images.idx"), dir.path().join("x-labels.idx"));
    save_idx(&data, &im, Some(&lb)).unwrap();
    let back: Dataset<f32> = load_idx(&im, Some(&lb)).unwrap();
    assert_eq!(back.images(), data.images());
    assert_eq!(back.labels().unwrap(), data.labels().unwrap());

    let m = save_dataset(&data, dir.path(), "blue").unwrap();
    let again: Dataset<f32> = load_dataset(&m).unwrap();
    assert_eq!(again.images(), data.images());
    let m2 = save_dataset(&again, &dir.path().join("b"), "blue").unwrap();
    assert_eq!(std::fs::read(&m).unwrap(), std::fs::read(&m2).unwrap());
}

#[test]
fn transforms_preserve_labels_and_order() {
    let data = seven_segment_digits::<f64>(25, 5).unwrap();
    let b = VariationModel::photometric(PhotometricKind::Brightness);
    let c = VariationModel::photometric(PhotometricKind::Contrast);
    let out = build_composed_testset(&data, &b, &c, &DeltaPolicy::Uniform { seed: 1 }).unwrap();
    assert_eq!(out.labels().unwrap(), data.labels().unwrap());
    assert_eq!(out.len(), data.len());
    let again = build_composed_testset(&data, &b, &c, &DeltaPolicy::Uniform { seed: 1 }).unwrap();
    assert_eq!(out.images(), again.images());
    let red = colorize_background(&data, &BackgroundFill::Uniform([255, 0, 0])).unwrap();
    assert_eq!(red.labels().unwrap(), data.labels().unwrap());
}
