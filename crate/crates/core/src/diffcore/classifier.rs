use std::str::FromStr;

use crate::diffcore::arch::Architecture;
use crate::diffcore::image::{Batch, Image};
use crate::diffcore::loss::{cross_entropy, cross_entropy_grad, Logits};
use crate::diffcore::network::{Mode, Network};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// A fixed architecture plus its flat parameter vector `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier<S> {
    net: Network,
    weights: Vec<S>,
}

impl<S: Scalar> Classifier<S> {
    /// Fresh parameters drawn with fan-in scaled uniform initialization.
    pub fn init(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        let net = Network::new(arch)?;
        let weights = net.init(rng);
        Ok(Classifier { net, weights })
    }

    pub fn from_weights(arch: Architecture, weights: Vec<S>) -> Result<Self> {
        let net = Network::new(arch)?;
        if weights.len() != net.param_count() {
            return Err(Error::input(format!(
                "architecture has {} parameters, got {}",
                net.param_count(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::numerical("non-finite classifier weight"));
        }
        Ok(Classifier { net, weights })
    }

    pub fn arch(&self) -> &Architecture {
        self.net.arch()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [S] {
        &mut self.weights
    }

    pub fn classes(&self) -> usize {
        self.net.output_shape().len()
    }

    fn check_image(&self, image: &Image<S>) -> Result<()> {
        if image.shape() != self.net.input_shape() {
            return Err(Error::input(format!(
                "classifier expects {}, got {}",
                self.net.input_shape(),
                image.shape()
            )));
        }
        Ok(())
    }

    pub fn logits(&self, image: &Image<S>, mode: Mode<'_>) -> Result<Vec<S>> {
        self.check_image(image)?;
        let trace = self.net.forward(&self.weights, image.pixels(), mode)?;
        Ok(trace.output().to_vec())
    }

    /// Loss of one example in evaluation mode.
    pub fn loss(&self, image: &Image<S>, label: usize) -> Result<S> {
        cross_entropy(&self.logits(image, Mode::Eval)?, label)
    }

    /// Argmax prediction, lowest index on ties.
    pub fn predict(&self, image: &Image<S>) -> Result<usize> {
        let z = self.logits(image, Mode::Eval)?;
        Ok(argmax(&z))
    }

    /// Adds `weight · ∇_w ℓ(image, label)` into `grad` and returns the loss.
    pub fn accumulate_grad(
        &self,
        image: &Image<S>,
        label: usize,
        weight: S,
        mode: Mode<'_>,
        grad: &mut [S],
    ) -> Result<S> {
        self.check_image(image)?;
        let trace = self.net.forward(&self.weights, image.pixels(), mode)?;
        let loss = cross_entropy(trace.output(), label)?;
        if !loss.is_finite() {
            return Err(Error::numerical("non-finite cross-entropy"));
        }
        let mut up = cross_entropy_grad(trace.output(), label);
        for v in &mut up {
            *v *= weight;
        }
        self.net.backward(&self.weights, &trace, &up, grad, false);
        Ok(loss)
    }
}

impl<S: Scalar> FromStr for Classifier<S> {
    type Err = Error;

    /// Zero-initialized classifier for an architecture descriptor.
    fn from_str(s: &str) -> Result<Self> {
        let arch: Architecture = s.parse()?;
        let n = Network::new(arch.clone())?.param_count();
        Classifier::from_weights(arch, vec![S::zero(); n])
    }
}

pub(crate) fn argmax<S: Scalar>(z: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Logits for every image of a batch (evaluation mode).
pub fn forward_classifier<S: Scalar>(params: &Classifier<S>, batch: &Batch<S>) -> Result<Logits<S>> {
    let rows = batch
        .images
        .iter()
        .map(|im| params.logits(im, Mode::Eval))
        .collect::<Result<Vec<_>>>()?;
    Logits::from_rows(rows)
}

/// Mean batch cross-entropy and its gradient with respect to `w`
/// (evaluation mode, so dropout is inactive).
pub fn grad_params<S: Scalar>(params: &Classifier<S>, batch: &Batch<S>) -> Result<(S, Vec<S>)> {
    let mut grad = vec![S::zero(); params.weights.len()];
    let m = S::lit(batch.len() as f64);
    let w = S::one() / m;
    let mut total = S::zero();
    for (im, &y) in batch.images.iter().zip(&batch.labels) {
        total += params.accumulate_grad(im, y, w, Mode::Eval, &mut grad)?;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical("non-finite parameter gradient"));
    }
    Ok((total / m, grad))
}

/// Loss and `∂ℓ/∂x` for a single image.
pub fn grad_input<S: Scalar>(params: &Classifier<S>, image: &Image<S>, label: usize) -> Result<(S, Vec<S>)> {
    let up = |z: &[S]| cross_entropy_grad(z, label);
    params.check_image(image)?;
    let trace = params.net.forward(&params.weights, image.pixels(), Mode::Eval)?;
    let loss = cross_entropy(trace.output(), label)?;
    if !loss.is_finite() {
        return Err(Error::numerical("non-finite cross-entropy"));
    }
    let g = params.net.backward_input(&params.weights, &trace, &up(trace.output()));
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite input gradient"));
    }
    Ok((loss, g))
}
