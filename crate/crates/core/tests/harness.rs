use std::sync::Arc;

use nuisance::datakit::{seven_segment_digits, shape_domain, Dataset, ShapeDomain, SHAPE_CLASSES, SHAPE_SHAPE};
use nuisance::diffcore::{Architecture, Classifier, Image, Shape};
use nuisance::genmodel::{Direction, MunitConfig, TranslationModel};
use nuisance::harness::desk::background_task;
use nuisance::harness::{
    ablate_k, emit_results, evaluate, invariance_rate, model_quality_study, summarize_logits, Ablation, QualityStudy,
};
use nuisance::rng::stream;
use nuisance::robusttrain::{Algorithm, TrainConfig};
use nuisance::variation::{NuisanceSpace, PhotometricKind, VariationModel};
use proptest::prelude::*;

proptest! {
    #[test]
    fn top1_never_exceeds_top5(rows in prop::collection::vec(prop::collection::vec(-3i8..3, 7), 1..30), seed in 0usize..1000) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
        let labels: Vec<usize> = (0..rows.len()).map(|i| (i * 3 + seed) % 7).collect();
        let s = summarize_logits(&rows, &labels).unwrap();
        prop_assert!(0.0 <= s.top1 && s.top1 <= s.top5 && s.top5 <= 100.0);
    }
}

fn zero_classifier(shape: Shape) -> Classifier<f32> {
    let arch = Architecture::from_layers(shape, "flat,fc10").unwrap();
    let n = Classifier::<f32>::init(arch.clone(), &mut stream(0, &[])).unwrap().weights().len();
    Classifier::from_weights(arch, vec![0.0; n]).unwrap()
}

#[test]
fn invariance_fixtures() {
    let data = seven_segment_digits::<f32>(20, 1).unwrap();
    let shape = data.shape().unwrap();
    let trained = Classifier::<f32>::init(Architecture::from_layers(shape, "flat,fc10").unwrap(), &mut stream(1, &[])).unwrap();
    let id = VariationModel::identity(1);
    assert_eq!(invariance_rate(&trained, &id, &data, 3, &mut stream(2, &[])).unwrap(), 1.0);
    let hue = VariationModel::photometric(PhotometricKind::Brightness);
    assert_eq!(invariance_rate(&zero_classifier(shape), &hue, &data, 3, &mut stream(2, &[])).unwrap(), 1.0);
    assert!(invariance_rate(&trained, &hue, &data, 0, &mut stream(2, &[])).is_err());

    // Recorded predictions: a classifier that reads the first pixel.
    let s1 = Shape::new(1, 1, 1);
    let arch = Architecture::from_layers(s1, "flat,fc2").unwrap();
    let c = Classifier::<f64>::from_weights(arch, vec![1.0, -1.0, 0.0, 0.5]).unwrap();
    let px = [0.2, 0.4, 0.3, 0.9];
    let d = Dataset::labeled(px.iter().map(|&p| Image::new(s1, vec![p]).unwrap()).collect(), vec![0; 4], "t").unwrap();
    // logits (p, 0.5 − p): class 0 iff p > 0.25; brightness shifts by 0.5·t.
    let g = VariationModel::photometric(PhotometricKind::Brightness);
    let mut rng = stream(3, &[]);
    let rate = invariance_rate(&c, &g, &d, 5, &mut rng).unwrap();
    let mut rng = stream(3, &[]);
    let mut same = 0;
    for i in 0..20 {
        let t = g.sample(&mut rng).values()[0];
        let p = px[i / 5];
        let shifted = (p + 0.5 * t).clamp(0.0, 1.0);
        same += usize::from((p > 0.25) == (shifted > 0.25));
    }
    assert_eq!(rate, same as f64 / 20.0);
    assert_eq!(evaluate(&c, &d).unwrap().top1, 75.0);
}

#[test]
fn ablation_bookkeeping_and_determinism() {
    let task = background_task::<f32>(48, 24, 0).unwrap();
    let ab = |seeds: Vec<u64>, ks: Vec<usize>| Ablation {
        train: &task.train,
        test: &task.tests[0].1,
        model: &task.model,
        base: TrainConfig::new(Algorithm::Mrt).with_epochs(1).with_batch_size(16),
        algorithms: vec![Algorithm::Mrt, Algorithm::Mat, Algorithm::Mda],
        ks,
        seeds,
    };
    let r = ablate_k(&ab(vec![0], vec![1])).unwrap();
    assert_eq!(r.table.rows.len(), 3);
    assert_eq!(r.runs.len(), 3);
    let grid = ablate_k(&ab(vec![0], vec![1, 2])).unwrap();
    assert_eq!(grid.runs.len(), 6);
    assert_eq!(grid.table.to_csv(), ablate_k(&ab(vec![0], vec![1, 2])).unwrap().table.to_csv());
    assert!(ablate_k(&ab(vec![0], vec![])).is_err());

    let dir = tempfile::tempdir().unwrap();
    emit_results(dir.path(), "ablate", &grid.table, None).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("ablate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn model_quality_rows_and_preconditions() {
    let cfg = MunitConfig::new(SHAPE_SHAPE, 2, 2, 3);
    let a = shape_domain::<f32>(ShapeDomain::A, 24, 1).unwrap();
    let b = shape_domain::<f32>(ShapeDomain::B, 24, 2).unwrap();
    let snap = |seed| Arc::new(TranslationModel::<f32>::init(cfg, &mut stream(seed, &[])).unwrap());
    let mut tc = TrainConfig::new(Algorithm::Mrt).with_epochs(1).with_k(2);
    tc.classes = SHAPE_CLASSES;
    let study = |snapshots| QualityStudy {
        snapshots,
        direction: Direction::AtoB,
        space: NuisanceSpace::symmetric(2),
        train: &a,
        shifted: &b,
        config: tc.clone(),
        seeds: vec![0, 1],
    };
    let curve = model_quality_study(&study(vec![(10, snap(1)), (20, snap(2)), (30, snap(3))])).unwrap();
    assert_eq!(curve.table.rows.len(), 3 * 2);
    assert_eq!(curve.means.iter().map(|m| m.0).collect::<Vec<_>>(), vec![10, 20, 30]);
    assert!(curve.plot.to_svg().contains("<path"));
    assert!(model_quality_study(&study(vec![(10, snap(1))])).is_err());
}
