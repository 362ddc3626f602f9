use nuisance::datakit::{shape_domain, ShapeDomain, SHAPE_SHAPE};
use nuisance::genmodel::{
    load_translation, read_snapshot_manifest, save_snapshots, train_translation, MunitConfig, MunitHyper, StylePrior,
    TranslationModel,
};
use nuisance::rng::stream;
use proptest::prelude::*;
use rand::Rng as _;

fn hyper(iterations: usize, snapshots: Vec<usize>) -> MunitHyper {
    MunitHyper {
        iterations,
        lr: 1e-3,
        snapshots,
        ..MunitHyper::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reconstruction_losses_are_nonnegative_and_total_is_weighted_sum(seed in 0u64..10_000) {
        let cfg = MunitConfig::new(SHAPE_SHAPE, 2, 2, 3);
        let m = TranslationModel::<f64>::init(cfg, &mut stream(seed, &[])).unwrap();
        let a = shape_domain::<f64>(ShapeDomain::A, 2, seed).unwrap();
        let b = shape_domain::<f64>(ShapeDomain::B, 2, seed + 1).unwrap();
        let mut r = stream(seed, &[1]);
        let prior = StylePrior { dim: 2 };
        let sa: Vec<Vec<f64>> = (0..2).map(|_| prior.sample(&mut r)).collect();
        let sb: Vec<Vec<f64>> = (0..2).map(|_| prior.sample(&mut r)).collect();
        let lx: f64 = r.gen_range(0.0..20.0);
        let h = MunitHyper { lambda_x: lx, ..MunitHyper::default() };
        let (l, _) = m.objective(a.images(), b.images(), &sa, &sb, &h, false).unwrap();
        prop_assert!(l.recon >= 0.0 && l.recon_c >= 0.0 && l.recon_s >= 0.0);
        prop_assert_eq!(l.total, l.gan + lx * l.recon + l.recon_c + l.recon_s);
    }
}

#[test]
fn snapshots_are_deterministic_and_round_trip() {
    let cfg = MunitConfig::new(SHAPE_SHAPE, 2, 2, 4);
    let a = shape_domain::<f32>(ShapeDomain::A, 20, 1).unwrap();
    let b = shape_domain::<f32>(ShapeDomain::B, 20, 2).unwrap();
    let h = hyper(30, vec![0, 10, 30]);
    let t1 = train_translation(a.images(), b.images(), cfg, &h, 7).unwrap();
    let t2 = train_translation(a.images(), b.images(), cfg, &h, 7).unwrap();
    assert_eq!(t1.snapshots.len(), 3);
    for (x, y) in t1.snapshots.iter().zip(&t2.snapshots) {
        assert_eq!(x.iteration, y.iteration);
        assert_eq!(x.params, y.params);
    }
    assert_ne!(t1.snapshots[0].params, t1.snapshots[2].params);

    let dir = tempfile::tempdir().unwrap();
    let manifest = save_snapshots(dir.path(), cfg, &t1.snapshots).unwrap();
    let listed = read_snapshot_manifest(&manifest).unwrap();
    assert_eq!(listed.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![0, 10, 30]);
    for ((_, path), s) in listed.iter().zip(&t1.snapshots) {
        let m: TranslationModel<f32> = load_translation(path).unwrap();
        assert_eq!(m.params(), &s.params[..]);
    }
}

#[test]
fn reconstruction_improves_on_the_shape_task() {
    let cfg = MunitConfig::new(SHAPE_SHAPE, 4, 2, 8);
    let a = shape_domain::<f32>(ShapeDomain::A, 200, 1).unwrap();
    let b = shape_domain::<f32>(ShapeDomain::B, 200, 2).unwrap();
    let t = train_translation(a.images(), b.images(), cfg, &hyper(400, vec![400]), 3).unwrap();
    let h = &t.history;
    let mean = |s: &[nuisance::genmodel::MunitLosses<f64>]| s.iter().map(|l| l.recon).sum::<f64>() / s.len() as f64;
    let (first, last) = (mean(&h[..40]), mean(&h[h.len() - 40..]));
    assert!(last < first, "ℓ_recon {first} → {last}");
}
