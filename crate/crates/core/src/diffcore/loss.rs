use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `n × k` logit matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits<S> {
    pub rows: usize,
    pub classes: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Logits<S> {
    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::input("ragged logit rows"));
        }
        Ok(Logits {
            rows: rows.len(),
            classes,
            data: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }
}

/// Mean and per-example cross-entropy.
#[derive(Clone, Debug, PartialEq)]
pub struct CeLoss<S> {
    pub mean: S,
    pub per_example: Vec<S>,
}

fn log_sum_exp<S: Scalar>(z: &[S]) -> S {
    let m = z.iter().copied().fold(S::neg_infinity(), S::max);
    if m == S::infinity() {
        return m;
    }
    m + z.iter().map(|&v| (v - m).exp()).sum::<S>().ln()
}

/// Cross-entropy of one logit row, `ln Σ exp(z) − z_label`, clamped at zero
/// against rounding.
pub fn cross_entropy<S: Scalar>(z: &[S], label: usize) -> Result<S> {
    if label >= z.len() {
        return Err(Error::input(format!(
            "label {label} out of range for {} classes",
            z.len()
        )));
    }
    Ok((log_sum_exp(z) - z[label]).max(S::zero()))
}

/// Softmax of a row minus the one-hot label: the logit gradient of
/// [`cross_entropy`].
pub fn cross_entropy_grad<S: Scalar>(z: &[S], label: usize) -> Vec<S> {
    let lse = log_sum_exp(z);
    let mut g: Vec<S> = z.iter().map(|&v| (v - lse).exp()).collect();
    g[label] -= S::one();
    g
}

pub fn loss_ce<S: Scalar>(logits: &Logits<S>, labels: &[usize]) -> Result<CeLoss<S>> {
    if labels.len() != logits.rows {
        return Err(Error::input(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows
        )));
    }
    if logits.rows == 0 {
        return Err(Error::input("no logits"));
    }
    let per_example = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| cross_entropy(logits.row(i), y))
        .collect::<Result<Vec<S>>>()?;
    let mean = per_example.iter().copied().sum::<S>() / S::lit(per_example.len() as f64);
    Ok(CeLoss { mean, per_example })
}
