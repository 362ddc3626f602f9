//! Inner maximization: the attack or nuisance search run on every batch.

use rayon::prelude::*;

use crate::diffcore::classifier::grad_input;
use crate::diffcore::{Classifier, Image};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::robusttrain::config::{AscentStep, Granularity};
use crate::scalar::{sign, Scalar};
use crate::variation::{NuisanceParam, NuisanceSpace, VariationModel};

/// Chosen δ per example and the (eval-mode) loss it attains.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerResult {
    pub deltas: Vec<NuisanceParam>,
    pub losses: Vec<f64>,
}

impl InnerResult {
    pub fn mean_loss(&self) -> f64 {
        if self.losses.is_empty() {
            return 0.0;
        }
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }
}

fn check_batch<S>(images: &[Image<S>], labels: &[usize]) -> Result<()> {
    if images.len() != labels.len() {
        return Err(Error::input(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Loss of `G(x, δ)` in evaluation mode.
pub fn model_loss<S: Scalar>(
    params: &Classifier<S>,
    model: &VariationModel<S>,
    x: &Image<S>,
    y: usize,
    delta: &NuisanceParam,
) -> Result<f64> {
    Ok(params.loss(&model.apply(x, delta)?, y)?.as_f64())
}

/// Iterated signed-gradient ascent on the pixels, projected onto the ℓ∞
/// ball of radius `epsilon` around `x` and onto [0, 1].
pub fn pgd_inner<S: Scalar>(
    x: &Image<S>,
    y: usize,
    params: &Classifier<S>,
    epsilon: f64,
    alpha: f64,
    steps: usize,
) -> Result<Image<S>> {
    if !(epsilon > 0.0) {
        return Err(Error::input("PGD radius must be positive"));
    }
    let eps = S::lit(epsilon);
    let step = S::lit(alpha);
    let lo: Vec<S> = x.pixels().iter().map(|&p| p - eps).collect();
    let hi: Vec<S> = x.pixels().iter().map(|&p| p + eps).collect();
    let mut adv = x.clone();
    for _ in 0..steps {
        let (_, g) = grad_input(params, &adv, y)?;
        let next: Vec<S> = adv
            .pixels()
            .iter()
            .zip(&g)
            .enumerate()
            .map(|(i, (&p, &gi))| {
                let v = (p + step * sign(gi)).max(lo[i]).min(hi[i]);
                v.max(S::zero()).min(S::one())
            })
            .collect();
        adv = Image::from_clipped(x.shape(), next);
    }
    Ok(adv)
}

/// [`pgd_inner`] over a batch.
pub fn pgd_batch<S: Scalar>(
    images: &[Image<S>],
    labels: &[usize],
    params: &Classifier<S>,
    epsilon: f64,
    alpha: f64,
    steps: usize,
) -> Result<Vec<Image<S>>> {
    check_batch(images, labels)?;
    images
        .par_iter()
        .zip(labels)
        .map(|(x, &y)| pgd_inner(x, y, params, epsilon, alpha, steps))
        .collect()
}

/// Index of the first strictly largest value (running max starts at −∞).
pub fn select_max(values: &[f64]) -> Option<usize> {
    let mut best = None;
    let mut max = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > max {
            max = v;
            best = Some(i);
        }
    }
    best
}

/// Worst-of-`k` random search. Candidates are drawn candidate-major
/// (`k` rounds of one δ per example). Batch granularity keeps the round
/// with the largest summed loss; per-example granularity keeps each
/// example's own worst candidate.
pub fn mrt_select<S: Scalar>(
    images: &[Image<S>],
    labels: &[usize],
    model: &VariationModel<S>,
    params: &Classifier<S>,
    k: usize,
    rng: &mut Rng,
    granularity: Granularity,
) -> Result<InnerResult> {
    check_batch(images, labels)?;
    if k == 0 {
        return Err(Error::input("MRT needs k >= 1"));
    }
    let m = images.len();
    let candidates: Vec<NuisanceParam> = (0..k * m).map(|_| model.sample(rng)).collect();
    let losses: Vec<f64> = candidates
        .par_iter()
        .enumerate()
        .map(|(c, d)| model_loss(params, model, &images[c % m], labels[c % m], d))
        .collect::<Result<_>>()?;
    let pick: Vec<usize> = match granularity {
        Granularity::Batch => {
            let sums: Vec<f64> = losses.chunks(m.max(1)).map(|r| r.iter().sum()).collect();
            let round = select_max(&sums).unwrap_or(0);
            (0..m).map(|j| round * m + j).collect()
        }
        Granularity::PerExample => (0..m)
            .map(|j| {
                let col: Vec<f64> = (0..k).map(|i| losses[i * m + j]).collect();
                select_max(&col).unwrap_or(0) * m + j
            })
            .collect(),
    };
    Ok(InnerResult {
        deltas: pick.iter().map(|&c| candidates[c].clone()).collect(),
        losses: pick.iter().map(|&c| losses[c]).collect(),
    })
}

/// Step `α₍ᵢ₎ = 0.1 · width(i)` used when no MAT step size is configured.
pub fn default_mat_alpha(space: &NuisanceSpace) -> Vec<f64> {
    (0..space.dim()).map(|i| 0.1 * space.width(i)).collect()
}

/// `k` projected ascent steps on δ from the box point nearest the origin.
pub fn mat_ascent<S: Scalar>(
    images: &[Image<S>],
    labels: &[usize],
    model: &VariationModel<S>,
    params: &Classifier<S>,
    k: usize,
    alpha: &[f64],
    step: AscentStep,
) -> Result<InnerResult> {
    check_batch(images, labels)?;
    if !model.is_differentiable() {
        return Err(Error::capability(format!(
            "MAT needs a model differentiable in δ; {} is not",
            model.kind_name()
        )));
    }
    let space = model.space();
    if alpha.len() != space.dim() {
        return Err(Error::input(format!(
            "MAT step has {} entries for a {}-dimensional nuisance space",
            alpha.len(),
            space.dim()
        )));
    }
    let results: Vec<(NuisanceParam, f64)> = images
        .par_iter()
        .zip(labels)
        .map(|(x, &y)| {
            let mut delta = space.origin();
            for _ in 0..k {
                let moved = model.apply(x, &delta)?;
                let (_, gx) = grad_input(params, &moved, y)?;
                let g = model.grad_nuisance(x, &delta, &gx)?;
                let raw: Vec<f64> = delta
                    .values()
                    .iter()
                    .zip(&g)
                    .zip(alpha)
                    .map(|((&d, &gi), &a)| match step {
                        AscentStep::Raw => d + a * gi,
                        AscentStep::Sign => d + a * sign(gi),
                    })
                    .collect();
                delta = space.project(&raw)?;
            }
            let loss = model_loss(params, model, x, y, &delta)?;
            Ok((delta, loss))
        })
        .collect::<Result<_>>()?;
    let (deltas, losses) = results.into_iter().unzip();
    Ok(InnerResult { deltas, losses })
}

/// `k` generated copies per example, candidate-major: entry `i·m + j` is
/// `G(x_j, δ_ij)` labeled `y_j`.
pub fn mda_augment<S: Scalar>(
    images: &[Image<S>],
    labels: &[usize],
    model: &VariationModel<S>,
    k: usize,
    rng: &mut Rng,
) -> Result<(Vec<Image<S>>, Vec<usize>)> {
    check_batch(images, labels)?;
    if k == 0 {
        return Err(Error::input("MDA needs k >= 1"));
    }
    let m = images.len();
    let deltas: Vec<NuisanceParam> = (0..k * m).map(|_| model.sample(rng)).collect();
    let out: Vec<Image<S>> = deltas
        .par_iter()
        .enumerate()
        .map(|(c, d)| model.apply(&images[c % m], d))
        .collect::<Result<_>>()?;
    let ys = (0..k * m).map(|c| labels[c % m]).collect();
    Ok((out, ys))
}

/// Exhaustive grid maximizer of `ℓ(G(x, δ), y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub delta: NuisanceParam,
    pub loss: f64,
    /// Largest loss change between grid neighbours: how far a continuous
    /// maximizer can exceed the grid maximum, to first order.
    pub tolerance: f64,
}

/// Scans `resolution` evenly spaced values per dimension (endpoints
/// included) in lexicographic order; ties keep the lexicographically
/// smallest point.
pub fn brute_force_inner<S: Scalar>(
    model: &VariationModel<S>,
    x: &Image<S>,
    y: usize,
    params: &Classifier<S>,
    resolution: usize,
) -> Result<OracleResult> {
    let space = model.space();
    let q = space.dim();
    if q > 3 {
        return Err(Error::capability(format!(
            "grid search over {q} nuisance dimensions is not supported (max 3)"
        )));
    }
    if resolution < 2 {
        return Err(Error::input("grid resolution must be at least 2"));
    }
    let axis = |i: usize, n: usize| -> f64 {
        if n == resolution - 1 {
            space.upper()[i]
        } else {
            space.lower()[i] + space.width(i) * n as f64 / (resolution - 1) as f64
        }
    };
    let total = resolution.pow(q as u32);
    let point = |flat: usize| -> Vec<usize> {
        let mut idx = vec![0; q];
        let mut rest = flat;
        for i in (0..q).rev() {
            idx[i] = rest % resolution;
            rest /= resolution;
        }
        idx
    };
    let losses: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let values: Vec<f64> = point(flat).iter().enumerate().map(|(i, &n)| axis(i, n)).collect();
            model_loss(params, model, x, y, &space.param(values)?)
        })
        .collect::<Result<_>>()?;
    let best = select_max(&losses).ok_or_else(|| Error::numerical("grid losses are all NaN"))?;
    let mut tolerance = 0.0f64;
    for flat in 0..total {
        let idx = point(flat);
        let mut stride = 1;
        for i in (0..q).rev() {
            if idx[i] + 1 < resolution {
                tolerance = tolerance.max((losses[flat + stride] - losses[flat]).abs());
            }
            stride *= resolution;
        }
    }
    let values = point(best).iter().enumerate().map(|(i, &n)| axis(i, n)).collect();
    Ok(OracleResult {
        delta: space.param(values)?,
        loss: losses[best],
        tolerance,
    })
}
