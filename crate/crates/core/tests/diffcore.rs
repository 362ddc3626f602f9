use nuisance::diffcore::gradcheck::check_coords;
use nuisance::diffcore::{
    cross_entropy, grad_params, load_classifier, save_classifier, update_step, Architecture, Batch, Classifier, Image,
    OptimConfig, OptimState, Shape,
};
use nuisance::rng::stream;
use proptest::prelude::*;
use rand::Rng as _;

fn image(shape: Shape, seed: u64) -> Image<f64> {
    let mut r = stream(seed, &[]);
    Image::new(shape, (0..shape.len()).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cross_entropy_is_nonnegative(z in prop::collection::vec(-30.0f64..30.0, 2..12), pick in 0usize..12) {
        let label = pick % z.len();
        prop_assert!(cross_entropy(&z, label).unwrap() >= 0.0);
    }

    #[test]
    fn sgd_step_is_exact(w in prop::collection::vec(-2.0f64..2.0, 1..20), lr in 1e-4f64..1.0, seed in 0u64..1000) {
        let mut r = stream(seed, &[]);
        let g: Vec<f64> = w.iter().map(|_| r.gen_range(-3.0..3.0)).collect();
        let mut p = w.clone();
        let mut st = OptimState::new(OptimConfig::sgd(lr), p.len());
        update_step(&mut p, &g, &mut st).unwrap();
        for ((a, b), d) in p.iter().zip(&w).zip(&g) {
            prop_assert_eq!(*a, b - lr * d);
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences(seed in 0u64..10_000) {
        let shape = Shape::new(2, 4, 4);
        let arch = Architecture::from_layers(shape, "c3-3,tanh,p2,flat,fc5,sigmoid,fc4").unwrap();
        let c = Classifier::<f64>::init(arch, &mut stream(seed, &[1])).unwrap();
        let batch = Batch::new(vec![image(shape, seed), image(shape, seed + 1)], vec![1, 3]).unwrap();
        let (_, g) = grad_params(&c, &batch).unwrap();
        let coords: Vec<usize> = (0..g.len()).step_by(3).collect();
        let res = check_coords(c.weights(), &g, &coords, 1e-5, |w| {
            grad_params(&Classifier::from_weights(c.arch().clone(), w.to_vec()).unwrap(), &batch).unwrap().0
        });
        prop_assert!(res.passes(1e-4), "{:?}", res);
    }
}

#[test]
fn init_is_deterministic_and_checkpoints_are_byte_stable() {
    let arch = Architecture::reference_cnn(Shape::new(3, 8, 8), [4, 4, 8, 8], 10).unwrap();
    let a = Classifier::<f32>::init(arch.clone(), &mut stream(5, &[])).unwrap();
    let b = Classifier::<f32>::init(arch, &mut stream(5, &[])).unwrap();
    assert_eq!(a.weights(), b.weights());
    let dir = tempfile::tempdir().unwrap();
    let (p, q) = (dir.path().join("a.mbrt"), dir.path().join("b.mbrt"));
    save_classifier(&a, &p).unwrap();
    save_classifier(&b, &q).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(bytes, std::fs::read(&q).unwrap());
    assert_eq!(&bytes[..4], b"MBRT");
    let back: Classifier<f32> = load_classifier(&p).unwrap();
    assert_eq!(back.weights(), a.weights());
    assert_eq!(back.arch(), a.arch());
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let arch = Architecture::from_layers(Shape::new(1, 2, 2), "flat,fc3").unwrap();
    let c = Classifier::<f64>::init(arch, &mut stream(1, &[])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.mbrt");
    save_classifier(&c, &p).unwrap();
    let mut bytes = std::fs::read(&p).unwrap();
    let n = bytes.len();
    bytes[n - 9] ^= 0x40;
    std::fs::write(&p, &bytes).unwrap();
    assert!(matches!(load_classifier::<f64>(&p), Err(nuisance::Error::Format { .. })));
}
