//! Training loops: ERM, PGD adversarial training, and the model-based
//! MRT / MAT / MDA variants.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::datakit::Dataset;
use crate::diffcore::network::Mode;
use crate::diffcore::optim::{update_step, OptimState};
use crate::diffcore::{Classifier, Image};
use crate::error::{Error, Result};
use crate::rng::{purpose, stream};
use crate::robusttrain::config::{Algorithm, MdaReduction, TrainConfig};
use crate::robusttrain::inner::{default_mat_alpha, mat_ascent, mda_augment, mrt_select, pgd_batch};
use crate::scalar::Scalar;
use crate::variation::VariationModel;

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Eval-mode loss on the monitor subset of the training data.
    pub clean_loss: f64,
    /// Mean loss of the training term (clean for ERM, adversarial for PGD,
    /// model-generated for MRT/MAT/MDA) over the epoch.
    pub model_loss: f64,
    /// Top-1 percentage on the monitor subset.
    pub top1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport<S> {
    pub config: TrainConfig,
    pub epochs: Vec<EpochLog>,
    pub classifier: Classifier<S>,
    /// Per-coordinate MAT step actually used.
    pub mat_alpha: Option<Vec<f64>>,
    pub wall_time: Duration,
    /// Named evaluation results attached by the caller, as (domain, top-1).
    pub evaluations: Vec<(String, f64)>,
}

/// Gradient and loss terms of one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGradient<S> {
    pub grad: Vec<S>,
    /// Mean clean loss, absent when λ = 0 (the term is skipped).
    pub clean_loss: Option<f64>,
    /// Mean loss of the model / adversarial term.
    pub model_loss: f64,
    /// Mean of `model term + λ · clean term` per example.
    pub combined: f64,
}

/// Position of a batch inside a run; keys every random stream it uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchKey {
    pub seed: u64,
    pub epoch: usize,
    pub batch: usize,
}

impl BatchKey {
    fn dropout(&self, example: usize, term: usize) -> crate::rng::Rng {
        stream(
            self.seed,
            &[purpose::DROPOUT, self.epoch as u64, self.batch as u64, example as u64, term as u64],
        )
    }

    fn nuisance(&self) -> crate::rng::Rng {
        stream(self.seed, &[purpose::NUISANCE, self.epoch as u64, self.batch as u64])
    }
}

/// Per-example weighted loss terms: `(image, weight, dropout term)`.
type Terms<'a, S> = Vec<(&'a Image<S>, S, usize)>;

fn reduce<S: Scalar>(buffers: Vec<Vec<S>>, len: usize, m: usize) -> Result<Vec<S>> {
    let mut total = vec![S::zero(); len];
    for b in &buffers {
        for (t, &g) in total.iter_mut().zip(b) {
            *t += g;
        }
    }
    let scale = S::one() / S::lit(m as f64);
    for t in &mut total {
        *t *= scale;
    }
    if total.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical("non-finite training gradient"));
    }
    Ok(total)
}

/// Gradient of `(1/m) Σ_j Σ_terms weight · ℓ(image, y_j)` with train-mode
/// dropout; returns the gradient and per-example, per-term losses.
fn accumulate<S: Scalar>(
    classifier: &Classifier<S>,
    terms: &[Terms<'_, S>],
    labels: &[usize],
    key: BatchKey,
) -> Result<(Vec<S>, Vec<Vec<f64>>)> {
    let len = classifier.weights().len();
    let per: Vec<(Vec<S>, Vec<f64>)> = terms
        .par_iter()
        .zip(labels)
        .enumerate()
        .map(|(j, (ts, &y))| {
            let mut g = vec![S::zero(); len];
            let mut losses = Vec::with_capacity(ts.len());
            for &(im, w, term) in ts {
                let mut rng = key.dropout(j, term);
                let l = classifier.accumulate_grad(im, y, w, Mode::Train(&mut rng), &mut g)?;
                losses.push(l.as_f64());
            }
            Ok((g, losses))
        })
        .collect::<Result<_>>()?;
    let (bufs, losses): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    Ok((reduce(bufs, len, labels.len())?, losses))
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// The training gradient of one batch under `config.algorithm`.
pub fn step_gradient<S: Scalar>(
    classifier: &Classifier<S>,
    model: Option<&VariationModel<S>>,
    images: &[Image<S>],
    labels: &[usize],
    config: &TrainConfig,
    key: BatchKey,
) -> Result<StepGradient<S>> {
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::input("batch must be nonempty with one label per image"));
    }
    let lambda = S::lit(config.lambda);
    let one = S::one();
    let with_clean = config.lambda != 0.0;
    let need_model = || {
        model.ok_or_else(|| Error::config(format!("{} needs a model of natural variation", config.algorithm)))
    };
    // generated / adversarial images, candidate-major for MDA
    let generated: Vec<Image<S>>;
    let per_example_terms: usize;
    match config.algorithm {
        Algorithm::Erm => {
            let terms: Vec<Terms<'_, S>> = images.iter().map(|x| vec![(x, one, 0)]).collect();
            let (grad, losses) = accumulate(classifier, &terms, labels, key)?;
            let l = mean(losses.iter().map(|v| v[0]));
            return Ok(StepGradient {
                grad,
                clean_loss: Some(l),
                model_loss: l,
                combined: l,
            });
        }
        Algorithm::Pgd => {
            let p = config.pgd;
            generated = pgd_batch(images, labels, classifier, p.epsilon, p.alpha, p.steps)?;
            let terms: Vec<Terms<'_, S>> = generated.iter().map(|x| vec![(x, one, 0)]).collect();
            let (grad, losses) = accumulate(classifier, &terms, labels, key)?;
            let l = mean(losses.iter().map(|v| v[0]));
            return Ok(StepGradient {
                grad,
                clean_loss: None,
                model_loss: l,
                combined: l,
            });
        }
        Algorithm::Mrt => {
            let g = need_model()?;
            let sel = mrt_select(images, labels, g, classifier, config.k, &mut key.nuisance(), config.granularity)?;
            generated = images
                .iter()
                .zip(&sel.deltas)
                .map(|(x, d)| g.apply(x, d))
                .collect::<Result<_>>()?;
            per_example_terms = 1;
        }
        Algorithm::Mat => {
            let g = need_model()?;
            let alpha = mat_alpha(config, g);
            let res = mat_ascent(images, labels, g, classifier, config.k, &alpha, config.mat_step)?;
            generated = images
                .iter()
                .zip(&res.deltas)
                .map(|(x, d)| g.apply(x, d))
                .collect::<Result<_>>()?;
            per_example_terms = 1;
        }
        Algorithm::Mda => {
            let g = need_model()?;
            generated = mda_augment(images, labels, g, config.k, &mut key.nuisance())?.0;
            per_example_terms = config.k;
        }
    }
    let m = images.len();
    let w_model = match (config.algorithm, config.mda_reduction) {
        (Algorithm::Mda, MdaReduction::Mean) => one / S::lit(config.k as f64),
        _ => one,
    };
    let terms: Vec<Terms<'_, S>> = (0..m)
        .map(|j| {
            let mut ts: Terms<'_, S> = (0..per_example_terms)
                .map(|i| (&generated[i * m + j], w_model, i))
                .collect();
            if with_clean {
                ts.push((&images[j], lambda, per_example_terms));
            }
            ts
        })
        .collect();
    let (grad, losses) = accumulate(classifier, &terms, labels, key)?;
    let wm = w_model.as_f64();
    let model_loss = mean(losses.iter().flat_map(|v| v[..per_example_terms].to_vec()));
    let clean_loss = with_clean.then(|| mean(losses.iter().map(|v| v[per_example_terms])));
    let combined = mean(losses.iter().map(|v| {
        let model_sum: f64 = v[..per_example_terms].iter().map(|l| wm * l).sum();
        model_sum + if with_clean { config.lambda * v[per_example_terms] } else { 0.0 }
    }));
    Ok(StepGradient {
        grad,
        clean_loss,
        model_loss,
        combined,
    })
}

fn mat_alpha<S: Scalar>(config: &TrainConfig, model: &VariationModel<S>) -> Vec<f64> {
    match config.mat_alpha {
        Some(a) => vec![a; model.space().dim()],
        None => default_mat_alpha(model.space()),
    }
}

/// Eval-mode clean loss and top-1 (percent) of the first `n` items.
fn monitor<S: Scalar>(classifier: &Classifier<S>, data: &Dataset<S>, n: usize) -> Result<(f64, f64)> {
    let n = n.min(data.len());
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let labels = data.labels()?;
    let rows: Vec<(f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = data.image(i);
            let l = classifier.loss(x, labels[i])?.as_f64();
            Ok((l, classifier.predict(x)? == labels[i]))
        })
        .collect::<Result<_>>()?;
    let loss = mean(rows.iter().map(|r| r.0));
    let hits = rows.iter().filter(|r| r.1).count();
    Ok((loss, 100.0 * hits as f64 / n as f64))
}

/// Runs `config.epochs` epochs of `config.algorithm` on `data`.
pub fn train<S: Scalar>(
    data: &Dataset<S>,
    model: Option<&VariationModel<S>>,
    config: &TrainConfig,
) -> Result<TrainReport<S>> {
    config.validate()?;
    let labels = data.labels()?;
    let shape = data
        .shape()
        .ok_or_else(|| Error::input("cannot train on an empty dataset"))?;
    if let Some(&bad) = labels.iter().find(|&&y| y >= config.classes) {
        return Err(Error::input(format!(
            "label {bad} out of range for {} classes",
            config.classes
        )));
    }
    if config.algorithm.is_model_based() {
        let g = model.ok_or_else(|| {
            Error::config(format!("{} needs a model of natural variation", config.algorithm))
        })?;
        if let Some(s) = g.fixed_shape() {
            if s != shape {
                return Err(Error::input(format!("model expects {s} images, data has {shape}")));
            }
        }
    }
    let arch = config.architecture(shape)?;
    if arch.output().len() != config.classes {
        return Err(Error::config("architecture output does not match class count"));
    }
    let start = Instant::now();
    let mut classifier = Classifier::init(arch, &mut stream(config.seed, &[purpose::INIT]))?;
    let mut state = OptimState::new(config.optim, classifier.weights().len());
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut stream(config.seed, &[purpose::SHUFFLE, epoch as u64]));
        let mut losses = Vec::new();
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let images: Vec<Image<S>> = idx.iter().map(|&i| data.image(i).clone()).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let key = BatchKey {
                seed: config.seed,
                epoch,
                batch: b,
            };
            let step = step_gradient(&classifier, model, &images, &ys, config, key)?;
            update_step(classifier.weights_mut(), &step.grad, &mut state)?;
            losses.push((step.model_loss, idx.len()));
        }
        let total: usize = losses.iter().map(|l| l.1).sum();
        let model_loss = losses.iter().map(|(l, n)| l * *n as f64).sum::<f64>() / total as f64;
        let (clean_loss, top1) = monitor(&classifier, data, config.monitor)?;
        logs.push(EpochLog {
            epoch: epoch + 1,
            clean_loss,
            model_loss,
            top1,
        });
    }
    Ok(TrainReport {
        config: config.clone(),
        epochs: logs,
        classifier,
        mat_alpha: match (config.algorithm, model) {
            (Algorithm::Mat, Some(g)) => Some(mat_alpha(config, g)),
            _ => None,
        },
        wall_time: start.elapsed(),
        evaluations: Vec::new(),
    })
}

/// Standard empirical risk minimization.
pub fn erm_train<S: Scalar>(data: &Dataset<S>, config: &TrainConfig) -> Result<TrainReport<S>> {
    let mut c = config.clone();
    c.algorithm = Algorithm::Erm;
    train(data, None, &c)
}

/// ERM on PGD adversarial examples.
pub fn pgd_train<S: Scalar>(data: &Dataset<S>, config: &TrainConfig) -> Result<TrainReport<S>> {
    let mut c = config.clone();
    c.algorithm = Algorithm::Pgd;
    train(data, None, &c)
}

/// MRT, MAT or MDA against the model `g`.
pub fn model_train<S: Scalar>(
    data: &Dataset<S>,
    g: &VariationModel<S>,
    config: &TrainConfig,
) -> Result<TrainReport<S>> {
    if !config.algorithm.is_model_based() {
        return Err(Error::config(format!(
            "model_train expects mrt, mat or mda, got {}",
            config.algorithm
        )));
    }
    train(data, Some(g), config)
}

pub const METRICS_HEADER: &str = "epoch\tclean_loss\tmodel_loss\ttop1";

/// Tab-separated metrics log, one line per epoch. Wall time is left out so
/// identical runs give identical files.
pub fn format_metrics(logs: &[EpochLog]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for l in logs {
        let _ = writeln!(s, "{}\t{:.6}\t{:.6}\t{:.2}", l.epoch, l.clean_loss, l.model_loss, l.top1);
    }
    s
}

pub fn write_metrics_log(path: &Path, logs: &[EpochLog]) -> Result<()> {
    std::fs::write(path, format_metrics(logs))?;
    Ok(())
}

pub fn read_metrics_log(path: &Path) -> Result<Vec<EpochLog>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let mut offset = 0u64;
    match lines.next() {
        Some(h) if h == METRICS_HEADER => offset += h.len() as u64 + 1,
        _ => return Err(Error::format(0, "metrics log lacks its header line")),
    }
    let mut out = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::format(offset, format!("malformed metrics line `{line}`"));
        if f.len() != 4 {
            return Err(bad());
        }
        out.push(EpochLog {
            epoch: f[0].parse().map_err(|_| bad())?,
            clean_loss: f[1].parse().map_err(|_| bad())?,
            model_loss: f[2].parse().map_err(|_| bad())?,
            top1: f[3].parse().map_err(|_| bad())?,
        });
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}
