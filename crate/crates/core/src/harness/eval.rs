//! Accuracy and invariance metrics.

use rayon::prelude::*;

use crate::datakit::Dataset;
use crate::diffcore::network::Mode;
use crate::diffcore::Classifier;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::variation::VariationModel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    /// Percent of items whose argmax is the label.
    pub top1: f64,
    /// Percent of items whose label is among the five largest logits.
    pub top5: f64,
    /// Fraction of (item, δ) pairs with unchanged prediction, when measured.
    pub invariance: Option<f64>,
    pub samples: usize,
}

/// Rank of `label` when logits are sorted descending, ties broken toward
/// the lower class index (0 = top-1).
pub fn label_rank<S: Scalar>(logits: &[S], label: usize) -> usize {
    let z = logits[label];
    logits
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v > z || (v == z && i < label))
        .count()
}

/// Top-1 and top-5 summary over precomputed logits.
pub fn summarize_logits<S: Scalar>(rows: &[Vec<S>], labels: &[usize]) -> Result<EvalSummary> {
    if rows.len() != labels.len() {
        return Err(Error::input("one label per logit row required"));
    }
    if let Some((r, &y)) = rows.iter().zip(labels).find(|(r, &y)| y >= r.len()) {
        return Err(Error::input(format!("label {y} out of range for {} classes", r.len())));
    }
    let n = rows.len();
    let ranks: Vec<usize> = rows.iter().zip(labels).map(|(r, &y)| label_rank(r, y)).collect();
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    Ok(EvalSummary {
        top1: pct(ranks.iter().filter(|&&r| r == 0).count()),
        top5: pct(ranks.iter().filter(|&&r| r < 5).count()),
        invariance: None,
        samples: n,
    })
}

pub fn evaluate<S: Scalar>(params: &Classifier<S>, data: &Dataset<S>) -> Result<EvalSummary> {
    let labels = data.labels()?;
    let rows: Vec<Vec<S>> = data
        .images()
        .par_iter()
        .map(|x| params.logits(x, Mode::Eval))
        .collect::<Result<_>>()?;
    summarize_logits(&rows, labels)
}

/// Fraction of (item, δ) pairs for which `f(G(x, δ)) = f(x)`.
pub fn invariance_rate<S: Scalar>(
    params: &Classifier<S>,
    model: &VariationModel<S>,
    data: &Dataset<S>,
    samples_per_item: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if samples_per_item == 0 {
        return Err(Error::input("invariance needs at least one sample per item"));
    }
    if data.is_empty() {
        return Ok(1.0);
    }
    let deltas: Vec<_> = (0..data.len() * samples_per_item).map(|_| model.sample(rng)).collect();
    let base: Vec<usize> = data
        .images()
        .par_iter()
        .map(|x| params.predict(x))
        .collect::<Result<_>>()?;
    let same = deltas
        .par_iter()
        .enumerate()
        .map(|(c, d)| {
            let i = c / samples_per_item;
            Ok(params.predict(&model.apply(data.image(i), d)?)? == base[i])
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(same.iter().filter(|&&s| s).count() as f64 / same.len() as f64)
}
