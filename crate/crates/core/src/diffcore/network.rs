//! Feed-forward layer stacks with explicit forward and backward passes.
//!
//! Parameters are kept outside the network in one flat vector; the network
//! only knows the offsets of each layer's slice. A forward pass records a
//! [`Trace`] that the backward pass consumes.

use rand::Rng as _;

use crate::diffcore::arch::{Architecture, Layer, LEAKY_SLOPE};
use crate::diffcore::image::Shape;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Whether dropout is active. Masks are drawn from the supplied stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

#[derive(Clone, Debug)]
enum Aux<S> {
    None,
    Argmax(Vec<u32>),
    Mask(Vec<S>),
}

/// Activations recorded by [`Network::forward`].
#[derive(Clone, Debug)]
pub struct Trace<S> {
    acts: Vec<Vec<S>>,
    aux: Vec<Aux<S>>,
}

impl<S> Trace<S> {
    pub fn output(&self) -> &[S] {
        self.acts.last().expect("trace has an input")
    }

    pub fn input(&self) -> &[S] {
        &self.acts[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    arch: Architecture,
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
    param_count: usize,
}

impl Network {
    pub fn new(arch: Architecture) -> Result<Self> {
        let shapes = arch.shapes()?;
        let mut offsets = Vec::with_capacity(arch.layers.len());
        let mut total = 0;
        for (layer, shape) in arch.layers.iter().zip(&shapes) {
            offsets.push(total);
            total += layer.param_count(*shape);
        }
        Ok(Network {
            arch,
            shapes,
            offsets,
            param_count: total,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Fan-in scaled uniform initialization: every weight and bias of a layer
    /// with fan-in `n` is drawn from U(-1/sqrt(n), 1/sqrt(n)).
    pub fn init<S: Scalar>(&self, rng: &mut Rng) -> Vec<S> {
        let mut w = Vec::with_capacity(self.param_count);
        for (layer, shape) in self.arch.layers.iter().zip(&self.shapes) {
            let fan_in = match *layer {
                Layer::Conv { kernel, .. } => shape.channels * kernel * kernel,
                Layer::Linear { .. } => shape.len(),
                _ => continue,
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..layer.param_count(*shape) {
                w.push(S::lit(rng.gen_range(-bound..bound)));
            }
        }
        w
    }

    fn check(&self, w_len: usize, x_len: usize) -> Result<()> {
        if w_len != self.param_count {
            return Err(Error::input(format!(
                "network needs {} parameters, got {w_len}",
                self.param_count
            )));
        }
        if x_len != self.input_shape().len() {
            return Err(Error::input(format!(
                "network expects input {}, got {x_len} values",
                self.input_shape()
            )));
        }
        Ok(())
    }

    /// Index range of layer `i`'s parameters in the flat vector.
    pub fn layer_range(&self, i: usize) -> std::ops::Range<usize> {
        let n = self.arch.layers[i].param_count(self.shapes[i]);
        self.offsets[i]..self.offsets[i] + n
    }

    fn layer_params<'w, S>(&self, w: &'w [S], i: usize) -> &'w [S] {
        let n = self.arch.layers[i].param_count(self.shapes[i]);
        &w[self.offsets[i]..self.offsets[i] + n]
    }

    pub fn forward<S: Scalar>(&self, w: &[S], x: &[S], mut mode: Mode<'_>) -> Result<Trace<S>> {
        self.check(w.len(), x.len())?;
        let mut acts = Vec::with_capacity(self.shapes.len());
        let mut aux = Vec::with_capacity(self.arch.layers.len());
        acts.push(x.to_vec());
        for (i, layer) in self.arch.layers.iter().enumerate() {
            let input = &acts[i];
            let ishape = self.shapes[i];
            let oshape = self.shapes[i + 1];
            let mut record = Aux::None;
            let out = match *layer {
                Layer::Conv { out_channels, kernel } => {
                    let mut out = vec![S::zero(); oshape.len()];
                    conv_forward(input, ishape, self.layer_params(w, i), out_channels, kernel, &mut out);
                    out
                }
                Layer::Linear { out } => linear_forward(input, self.layer_params(w, i), out),
                Layer::MaxPool2 => {
                    let (out, idx) = maxpool_forward(input, ishape, oshape);
                    record = Aux::Argmax(idx);
                    out
                }
                Layer::Upsample2 => upsample_forward(input, ishape, oshape),
                Layer::Relu => input.iter().map(|&v| v.max(S::zero())).collect(),
                Layer::LeakyRelu => {
                    let slope = S::lit(LEAKY_SLOPE);
                    input
                        .iter()
                        .map(|&v| if v > S::zero() { v } else { v * slope })
                        .collect()
                }
                Layer::Tanh => input.iter().map(|v| v.tanh()).collect(),
                Layer::Sigmoid => input.iter().map(|&v| sigmoid(v)).collect(),
                Layer::Dropout(p) => match &mut mode {
                    Mode::Eval => input.clone(),
                    Mode::Train(rng) => {
                        let keep = S::lit(1.0 / (1.0 - p));
                        let mask: Vec<S> = (0..input.len())
                            .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
                            .collect();
                        let out = input.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                        record = Aux::Mask(mask);
                        out
                    }
                },
                Layer::Flatten => input.clone(),
            };
            aux.push(record);
            acts.push(out);
        }
        Ok(Trace { acts, aux })
    }

    /// Back-propagates `upstream` (gradient at the output), accumulating
    /// parameter gradients into `grad_w`. Returns the input gradient when
    /// `need_input` is set, otherwise an empty vector.
    pub fn backward<S: Scalar>(
        &self,
        w: &[S],
        trace: &Trace<S>,
        upstream: &[S],
        grad_w: &mut [S],
        need_input: bool,
    ) -> Vec<S> {
        assert_eq!(grad_w.len(), self.param_count, "gradient buffer length");
        self.backward_impl(w, trace, upstream, Some(grad_w), need_input)
    }

    /// Input gradient only; parameter gradients are not formed.
    pub fn backward_input<S: Scalar>(&self, w: &[S], trace: &Trace<S>, upstream: &[S]) -> Vec<S> {
        self.backward_impl(w, trace, upstream, None, true)
    }

    fn backward_impl<S: Scalar>(
        &self,
        w: &[S],
        trace: &Trace<S>,
        upstream: &[S],
        mut grad_w: Option<&mut [S]>,
        need_input: bool,
    ) -> Vec<S> {
        assert_eq!(upstream.len(), self.output_shape().len(), "upstream length");
        let mut g = upstream.to_vec();
        for i in (0..self.arch.layers.len()).rev() {
            let input = &trace.acts[i];
            let output = &trace.acts[i + 1];
            let ishape = self.shapes[i];
            let want_in = need_input || i > 0;
            let n = self.arch.layers[i].param_count(ishape);
            let off = self.offsets[i];
            g = match (&self.arch.layers[i], &trace.aux[i]) {
                (&Layer::Conv { out_channels, kernel }, _) => conv_backward(
                    input,
                    ishape,
                    &w[off..off + n],
                    out_channels,
                    kernel,
                    &g,
                    grad_w.as_deref_mut().map(|gw| &mut gw[off..off + n]),
                    want_in,
                ),
                (&Layer::Linear { out }, _) => linear_backward(
                    input,
                    &w[off..off + n],
                    out,
                    &g,
                    grad_w.as_deref_mut().map(|gw| &mut gw[off..off + n]),
                    want_in,
                ),
                (Layer::MaxPool2, Aux::Argmax(idx)) => {
                    let mut gin = vec![S::zero(); input.len()];
                    for (&j, &gv) in idx.iter().zip(&g) {
                        gin[j as usize] += gv;
                    }
                    gin
                }
                (Layer::Upsample2, _) => upsample_backward(&g, ishape),
                (Layer::Relu, _) => g
                    .iter()
                    .zip(input)
                    .map(|(&gv, &v)| if v > S::zero() { gv } else { S::zero() })
                    .collect(),
                (Layer::LeakyRelu, _) => {
                    let slope = S::lit(LEAKY_SLOPE);
                    g.iter()
                        .zip(input)
                        .map(|(&gv, &v)| if v > S::zero() { gv } else { gv * slope })
                        .collect()
                }
                (Layer::Tanh, _) => g
                    .iter()
                    .zip(output)
                    .map(|(&gv, &y)| gv * (S::one() - y * y))
                    .collect(),
                (Layer::Sigmoid, _) => g
                    .iter()
                    .zip(output)
                    .map(|(&gv, &y)| gv * y * (S::one() - y))
                    .collect(),
                (Layer::Dropout(_), Aux::Mask(mask)) => {
                    g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect()
                }
                (Layer::Dropout(_), _) | (Layer::Flatten, _) => g,
                (Layer::MaxPool2, _) => unreachable!("pool trace lacks argmax"),
            };
        }
        if need_input {
            g
        } else {
            Vec::new()
        }
    }
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(v: S) -> S {
    if v >= S::zero() {
        S::one() / (S::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::one() + e)
    }
}

/// Valid output range `[lo, hi)` for kernel offset `kk` with padding `p`.
#[inline]
fn valid_range(kk: usize, p: usize, n: usize) -> (usize, usize) {
    let lo = p.saturating_sub(kk);
    let hi = (n + p).saturating_sub(kk).min(n);
    (lo, hi.max(lo))
}

fn conv_forward<S: Scalar>(
    inp: &[S],
    is: Shape,
    params: &[S],
    out_c: usize,
    k: usize,
    out: &mut [S],
) {
    let (h, wd) = (is.height, is.width);
    let p = k / 2;
    let plane = h * wd;
    let (weights, bias) = params.split_at(out_c * is.channels * k * k);
    for o in 0..out_c {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.fill(bias[o]);
        for i in 0..is.channels {
            let src = &inp[i * plane..(i + 1) * plane];
            for ky in 0..k {
                let (y0, y1) = valid_range(ky, p, h);
                for kx in 0..k {
                    let (x0, x1) = valid_range(kx, p, wd);
                    if x0 >= x1 {
                        continue;
                    }
                    let wv = weights[((o * is.channels + i) * k + ky) * k + kx];
                    for y in y0..y1 {
                        let iy = y + ky - p;
                        let drow = &mut dst[y * wd + x0..y * wd + x1];
                        let s0 = iy * wd + x0 + kx - p;
                        let srow = &src[s0..s0 + (x1 - x0)];
                        for (d, &s) in drow.iter_mut().zip(srow) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<S: Scalar>(
    inp: &[S],
    is: Shape,
    params: &[S],
    out_c: usize,
    k: usize,
    g: &[S],
    grad: Option<&mut [S]>,
    need_input: bool,
) -> Vec<S> {
    let (h, wd) = (is.height, is.width);
    let p = k / 2;
    let plane = h * wd;
    let wsize = out_c * is.channels * k * k;
    let weights = &params[..wsize];
    let mut grad = grad.map(|gr| gr.split_at_mut(wsize));
    let mut gin = if need_input {
        vec![S::zero(); inp.len()]
    } else {
        Vec::new()
    };
    for o in 0..out_c {
        let go = &g[o * plane..(o + 1) * plane];
        if let Some((_, gb)) = grad.as_mut() {
            gb[o] += go.iter().copied().sum::<S>();
        }
        for i in 0..is.channels {
            let src = &inp[i * plane..(i + 1) * plane];
            for ky in 0..k {
                let (y0, y1) = valid_range(ky, p, h);
                for kx in 0..k {
                    let (x0, x1) = valid_range(kx, p, wd);
                    if x0 >= x1 {
                        continue;
                    }
                    let widx = ((o * is.channels + i) * k + ky) * k + kx;
                    let wv = weights[widx];
                    let mut acc = S::zero();
                    for y in y0..y1 {
                        let iy = y + ky - p;
                        let grow = &go[y * wd + x0..y * wd + x1];
                        let s0 = iy * wd + x0 + kx - p;
                        if grad.is_some() {
                            let srow = &src[s0..s0 + (x1 - x0)];
                            for (&gv, &s) in grow.iter().zip(srow) {
                                acc += gv * s;
                            }
                        }
                        if need_input {
                            let base = i * plane + s0;
                            for (d, &gv) in gin[base..base + (x1 - x0)].iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        }
                    }
                    if let Some((gw, _)) = grad.as_mut() {
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    gin
}

fn linear_forward<S: Scalar>(inp: &[S], params: &[S], out: usize) -> Vec<S> {
    let n = inp.len();
    let (weights, bias) = params.split_at(out * n);
    (0..out)
        .map(|o| {
            let row = &weights[o * n..(o + 1) * n];
            bias[o] + row.iter().zip(inp).map(|(&a, &b)| a * b).sum::<S>()
        })
        .collect()
}

fn linear_backward<S: Scalar>(
    inp: &[S],
    params: &[S],
    out: usize,
    g: &[S],
    grad: Option<&mut [S]>,
    need_input: bool,
) -> Vec<S> {
    let n = inp.len();
    let weights = &params[..out * n];
    let mut grad = grad.map(|gr| gr.split_at_mut(out * n));
    let mut gin = if need_input {
        vec![S::zero(); n]
    } else {
        Vec::new()
    };
    for o in 0..out {
        let go = g[o];
        if let Some((gw, gb)) = grad.as_mut() {
            gb[o] += go;
            for (d, &x) in gw[o * n..(o + 1) * n].iter_mut().zip(inp) {
                *d += go * x;
            }
        }
        if need_input {
            let wrow = &weights[o * n..(o + 1) * n];
            for (d, &wv) in gin.iter_mut().zip(wrow) {
                *d += wv * go;
            }
        }
    }
    gin
}

fn maxpool_forward<S: Scalar>(inp: &[S], is: Shape, os: Shape) -> (Vec<S>, Vec<u32>) {
    let mut out = Vec::with_capacity(os.len());
    let mut idx = Vec::with_capacity(os.len());
    for c in 0..is.channels {
        let base = c * is.plane();
        for y in 0..os.height {
            for x in 0..os.width {
                let mut best = base + 2 * y * is.width + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let j = base + (2 * y + dy) * is.width + 2 * x + dx;
                    if inp[j] > inp[best] {
                        best = j;
                    }
                }
                out.push(inp[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

fn upsample_forward<S: Scalar>(inp: &[S], is: Shape, os: Shape) -> Vec<S> {
    let mut out = Vec::with_capacity(os.len());
    for c in 0..is.channels {
        for y in 0..os.height {
            let row = &inp[c * is.plane() + (y / 2) * is.width..][..is.width];
            for x in 0..os.width {
                out.push(row[x / 2]);
            }
        }
    }
    out
}

fn upsample_backward<S: Scalar>(g: &[S], is: Shape) -> Vec<S> {
    let ow = is.width * 2;
    let mut gin = vec![S::zero(); is.len()];
    for c in 0..is.channels {
        for y in 0..is.height * 2 {
            for x in 0..ow {
                gin[c * is.plane() + (y / 2) * is.width + x / 2] +=
                    g[c * is.plane() * 4 + y * ow + x];
            }
        }
    }
    gin
}
