//! Experiment orchestration: multi-seed comparisons, the k-ablation and
//! the model-quality study.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::datakit::Dataset;
use crate::diffcore::Classifier;
use crate::error::{Error, Result};
use crate::genmodel::{into_variation_model, load_translation, read_snapshot_manifest, Direction, TranslationModel};
use crate::harness::eval::{evaluate, invariance_rate, EvalSummary};
use crate::harness::results::{spread, Cell, Plot, Series, Table};
use crate::rng::{purpose, stream};
use crate::robusttrain::{
    mat_ascent, mda_augment, model_loss, mrt_select, train, Algorithm, Granularity, TrainConfig, TrainReport,
};
use crate::scalar::Scalar;
use crate::variation::{NuisanceSpace, VariationModel};

/// One trained classifier evaluated on named test sets.
#[derive(Clone, Debug)]
pub struct RunResult<S> {
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    pub report: TrainReport<S>,
    pub evals: Vec<(String, EvalSummary)>,
}

impl<S> RunResult<S> {
    pub fn top1(&self, domain: &str) -> Option<f64> {
        self.evals.iter().find(|(d, _)| d == domain).map(|(_, e)| e.top1)
    }
}

/// Trains `algorithm` (with `k`) at `seed` and evaluates on every test set.
/// When `invariance` is given, the first test set also gets an invariance
/// rate under that model (`samples` draws per item).
#[allow(clippy::too_many_arguments)]
pub fn run_one<S: Scalar>(
    train_data: &Dataset<S>,
    model: Option<&VariationModel<S>>,
    tests: &[(&str, &Dataset<S>)],
    base: &TrainConfig,
    algorithm: Algorithm,
    k: usize,
    seed: u64,
    invariance: Option<(&VariationModel<S>, usize)>,
) -> Result<RunResult<S>> {
    let mut cfg = base.clone();
    cfg.algorithm = algorithm;
    cfg.k = k;
    cfg.seed = seed;
    let g = if algorithm.is_model_based() { model } else { None };
    let mut report = train(train_data, g, &cfg)?;
    let mut evals = Vec::with_capacity(tests.len());
    for (i, (name, data)) in tests.iter().enumerate() {
        let mut e = evaluate(&report.classifier, data)?;
        if let (0, Some((m, n))) = (i, invariance) {
            let mut rng = stream(seed, &[purpose::EVAL, 1]);
            e.invariance = Some(invariance_rate(&report.classifier, m, data, n, &mut rng)?);
        }
        report.evaluations.push((name.to_string(), e.top1));
        evals.push((name.to_string(), e));
    }
    Ok(RunResult {
        algorithm,
        k,
        seed,
        report,
        evals,
    })
}

pub const RUN_COLUMNS: &[&str] = &["algorithm", "k", "seed", "domain", "top1", "top5", "invariance"];

/// Long-format table, one row per (run, test domain).
pub fn runs_table<S>(runs: &[RunResult<S>]) -> Result<Table> {
    let mut t = Table::new(RUN_COLUMNS);
    for r in runs {
        for (d, e) in &r.evals {
            t.push(vec![
                r.algorithm.name().into(),
                r.k.into(),
                r.seed.into(),
                d.as_str().into(),
                e.top1.into(),
                e.top5.into(),
                e.invariance.map_or(Cell::Text(String::new()), Cell::Num),
            ])?;
        }
    }
    Ok(t)
}

pub const SUMMARY_COLUMNS: &[&str] = &["algorithm", "k", "domain", "seeds", "top1_mean", "top1_min", "top1_max"];

/// Seed aggregation of [`runs_table`] rows, sorted by algorithm, k, domain.
pub fn summary_table<S>(runs: &[RunResult<S>]) -> Result<Table> {
    let mut groups: BTreeMap<(Algorithm, usize, String), Vec<f64>> = BTreeMap::new();
    for r in runs {
        for (d, e) in &r.evals {
            groups.entry((r.algorithm, r.k, d.clone())).or_default().push(e.top1);
        }
    }
    let mut t = Table::new(SUMMARY_COLUMNS);
    for ((a, k, d), v) in groups {
        let (mean, lo, hi) = spread(&v);
        t.push(vec![a.name().into(), k.into(), d.into(), v.len().into(), mean.into(), lo.into(), hi.into()])?;
    }
    Ok(t)
}

/// Mean top-1 on `domain` over runs matching `algorithm` (and `k`, if given).
pub fn mean_top1<S>(runs: &[RunResult<S>], algorithm: Algorithm, k: Option<usize>, domain: &str) -> f64 {
    let v: Vec<f64> = runs
        .iter()
        .filter(|r| r.algorithm == algorithm && k.map_or(true, |k| r.k == k))
        .filter_map(|r| r.top1(domain))
        .collect();
    spread(&v).0
}

/// Mean inner-maximization loss reached by `algorithm` with `k` at fixed
/// weights, over consecutive batches of `data` (MRT per the configured
/// granularity, MAT final loss, MDA mean augmented loss).
pub fn inner_loss_at_fixed_weights<S: Scalar>(
    classifier: &Classifier<S>,
    model: &VariationModel<S>,
    data: &Dataset<S>,
    config: &TrainConfig,
    algorithm: Algorithm,
    k: usize,
    batch: usize,
    seed: u64,
) -> Result<f64> {
    let labels = data.labels()?;
    let mut losses = Vec::new();
    for (b, start) in (0..data.len()).step_by(batch.max(1)).enumerate() {
        let end = (start + batch).min(data.len());
        let xs = &data.images()[start..end];
        let ys = &labels[start..end];
        let mut rng = stream(seed, &[purpose::NUISANCE, u64::MAX, b as u64]);
        let l = match algorithm {
            Algorithm::Mrt => mrt_select(xs, ys, model, classifier, k, &mut rng, config.granularity)?.mean_loss(),
            Algorithm::Mat => {
                let alpha = config
                    .mat_alpha
                    .map(|a| vec![a; model.space().dim()])
                    .unwrap_or_else(|| crate::robusttrain::default_mat_alpha(model.space()));
                mat_ascent(xs, ys, model, classifier, k, &alpha, config.mat_step)?.mean_loss()
            }
            Algorithm::Mda => {
                let (gen, gy) = mda_augment(xs, ys, model, k, &mut rng)?;
                let v = gen
                    .iter()
                    .zip(&gy)
                    .map(|(x, &y)| Ok(classifier.loss(x, y)?.as_f64()))
                    .collect::<Result<Vec<f64>>>()?;
                v.iter().sum::<f64>() / v.len() as f64
            }
            _ => {
                return Err(Error::config(format!("{algorithm} has no model-based inner maximization")));
            }
        };
        losses.push(l);
    }
    Ok(spread(&losses).0)
}

/// Inputs of the k-ablation.
pub struct Ablation<'a, S> {
    pub train: &'a Dataset<S>,
    /// Shifted test domain, evaluated as `"shifted"`.
    pub test: &'a Dataset<S>,
    pub model: &'a VariationModel<S>,
    pub base: TrainConfig,
    pub algorithms: Vec<Algorithm>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
}

pub const ABLATION_COLUMNS: &[&str] = &["algorithm", "k", "seeds", "top1_mean", "top1_min", "top1_max", "inner_loss"];

#[derive(Clone, Debug)]
pub struct AblationResult<S> {
    pub runs: Vec<RunResult<S>>,
    /// One row per (algorithm, k) with the fixed-weight inner-loss
    /// diagnostic (measured at each seed's ERM weights on the test set).
    pub table: Table,
}

/// One training run per (algorithm, k, seed).
pub fn ablate_k<S: Scalar>(a: &Ablation<'_, S>) -> Result<AblationResult<S>> {
    if a.ks.is_empty() {
        return Err(Error::config("k list is empty"));
    }
    if a.seeds.is_empty() {
        return Err(Error::config("seed list is empty"));
    }
    let tests = [("shifted", a.test)];
    let mut erm = Vec::new();
    for &seed in &a.seeds {
        erm.push(run_one(a.train, None, &tests, &a.base, Algorithm::Erm, 1, seed, None)?);
    }
    let mut runs = Vec::new();
    let mut table = Table::new(ABLATION_COLUMNS);
    for &algo in &a.algorithms {
        for &k in &a.ks {
            let mut top1 = Vec::new();
            let mut inner = Vec::new();
            for (si, &seed) in a.seeds.iter().enumerate() {
                let r = run_one(a.train, Some(a.model), &tests, &a.base, algo, k, seed, None)?;
                top1.push(r.top1("shifted").unwrap_or(f64::NAN));
                inner.push(inner_loss_at_fixed_weights(
                    &erm[si].report.classifier,
                    a.model,
                    a.test,
                    &a.base,
                    algo,
                    k,
                    a.base.batch_size,
                    seed,
                )?);
                runs.push(r);
            }
            let (mean, lo, hi) = spread(&top1);
            table.push(vec![
                algo.name().into(),
                k.into(),
                a.seeds.len().into(),
                mean.into(),
                lo.into(),
                hi.into(),
                spread(&inner).0.into(),
            ])?;
        }
    }
    Ok(AblationResult { runs, table })
}

/// Inputs of the model-quality study.
pub struct QualityStudy<'a, S> {
    /// (training iteration, snapshot) pairs.
    pub snapshots: Vec<(usize, Arc<TranslationModel<S>>)>,
    pub direction: Direction,
    pub space: NuisanceSpace,
    pub train: &'a Dataset<S>,
    pub shifted: &'a Dataset<S>,
    pub config: TrainConfig,
    pub seeds: Vec<u64>,
}

pub const QUALITY_COLUMNS: &[&str] = &["iteration", "seed", "top1"];

#[derive(Clone, Debug)]
pub struct QualityCurve {
    /// One row per (snapshot, seed).
    pub table: Table,
    pub plot: Plot,
    /// (iteration, mean top-1) in snapshot order.
    pub means: Vec<(usize, f64)>,
}

/// Trains one classifier per (snapshot, seed) with `config.algorithm`
/// against the snapshot's model and records shifted-domain top-1.
pub fn model_quality_study<S: Scalar>(s: &QualityStudy<'_, S>) -> Result<QualityCurve> {
    if s.snapshots.len() < 2 {
        return Err(Error::config(format!(
            "model-quality study needs at least two snapshots, got {}",
            s.snapshots.len()
        )));
    }
    if !s.config.algorithm.is_model_based() {
        return Err(Error::config("model-quality study trains with mrt, mat or mda"));
    }
    let mut table = Table::new(QUALITY_COLUMNS);
    let mut means = Vec::new();
    let mut series = Series {
        name: format!("{}-{}", s.config.algorithm, s.config.k),
        points: Vec::new(),
    };
    for (iteration, model) in &s.snapshots {
        let g = into_variation_model(model.clone(), s.direction, s.space.clone())?;
        let mut acc = Vec::new();
        for &seed in &s.seeds {
            let r = run_one(
                s.train,
                Some(&g),
                &[("shifted", s.shifted)],
                &s.config,
                s.config.algorithm,
                s.config.k,
                seed,
                None,
            )?;
            let top1 = r.top1("shifted").unwrap_or(f64::NAN);
            table.push(vec![(*iteration).into(), seed.into(), top1.into()])?;
            acc.push(top1);
        }
        let m = spread(&acc).0;
        means.push((*iteration, m));
        series.points.push((*iteration as f64, m));
    }
    Ok(QualityCurve {
        table,
        plot: Plot {
            title: "shifted-domain accuracy vs. translation-model training".into(),
            x_label: "snapshot iteration".into(),
            y_label: "top-1 (%)".into(),
            series: vec![series],
        },
        means,
    })
}

/// Loads every snapshot listed in a snapshot manifest, in file order.
pub fn load_snapshots<S: Scalar>(manifest: &Path) -> Result<Vec<(usize, Arc<TranslationModel<S>>)>> {
    read_snapshot_manifest(manifest)?
        .into_iter()
        .map(|(it, path)| Ok((it, Arc::new(load_translation(&path)?))))
        .collect()
}

/// Per-batch MRT-`k` selected loss at fixed weights. Candidate streams do
/// not depend on `k`, so the candidates for a smaller `k` are a prefix of
/// those for a larger one.
pub fn mrt_selected_losses<S: Scalar>(
    classifier: &Classifier<S>,
    model: &VariationModel<S>,
    data: &Dataset<S>,
    k: usize,
    batch: usize,
    batches: usize,
    seed: u64,
    granularity: Granularity,
) -> Result<Vec<f64>> {
    let labels = data.labels()?;
    if data.is_empty() {
        return Err(Error::input("no data for the MRT diagnostic"));
    }
    (0..batches)
        .map(|b| {
            let idx: Vec<usize> = (0..batch).map(|j| (b * batch + j) % data.len()).collect();
            let xs: Vec<_> = idx.iter().map(|&i| data.image(i).clone()).collect();
            let ys: Vec<_> = idx.iter().map(|&i| labels[i]).collect();
            let mut rng = stream(seed, &[purpose::NUISANCE, b as u64]);
            Ok(mrt_select(&xs, &ys, model, classifier, k, &mut rng, granularity)?.mean_loss())
        })
        .collect()
}

/// Loss of `G(x, δ)` for a single item, exposed for oracle comparisons.
pub fn item_loss<S: Scalar>(
    classifier: &Classifier<S>,
    model: &VariationModel<S>,
    data: &Dataset<S>,
    i: usize,
    delta: &crate::variation::NuisanceParam,
) -> Result<f64> {
    model_loss(classifier, model, data.image(i), data.labels()?[i], delta)
}
