//! Closed-form models of natural variation.
//!
//! Every transform here is written in terms of the normalized nuisance
//! coordinates `t ∈ [−1, 1]^q`; the owning model maps its box onto them.
//! Gradients returned by `grad_t` are with respect to `t`.

use std::f64::consts::PI;

use crate::diffcore::image::{Image, Shape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pre-clip value lies in the pixel range, so the clip passes gradients.
#[inline]
fn passes<S: Scalar>(z: S) -> bool {
    z >= S::zero() && z <= S::one()
}

#[inline]
fn clip<S: Scalar>(z: S) -> S {
    z.max(S::zero()).min(S::one())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L2,
    LInf,
}

/// `x + scale(t)` with `scale` taking the box onto the ε-ball.
#[derive(Clone, Debug, PartialEq)]
pub struct Additive {
    pub epsilon: f64,
    pub norm: Norm,
    pub shape: Shape,
}

impl Additive {
    fn check<S: Scalar>(&self, x: &Image<S>) -> Result<()> {
        if x.shape() != self.shape {
            return Err(Error::input(format!(
                "additive model built for {}, got {}",
                self.shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Perturbation vector for `t`. For the ℓ2 ball the box is mapped
    /// radially: `v = ε t ‖t‖∞ / ‖t‖₂`, a bijection between the unit
    /// ℓ∞ ball and the ε ℓ2 ball.
    pub fn perturbation(&self, t: &[f64]) -> Vec<f64> {
        match self.norm {
            Norm::LInf => t.iter().map(|v| self.epsilon * v).collect(),
            Norm::L2 => {
                let n = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0.0 {
                    return vec![0.0; t.len()];
                }
                let m = t.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                t.iter().map(|v| self.epsilon * v * m / n).collect()
            }
        }
    }

    pub fn apply<S: Scalar>(&self, x: &Image<S>, t: &[f64]) -> Result<Image<S>> {
        self.check(x)?;
        let v = self.perturbation(t);
        let px = x.pixels().iter().zip(&v).map(|(&p, &d)| clip(p + S::lit(d))).collect();
        Ok(Image::from_clipped(x.shape(), px))
    }

    fn masked<S: Scalar>(&self, x: &Image<S>, t: &[f64], u: &[S]) -> Vec<f64> {
        let v = self.perturbation(t);
        x.pixels()
            .iter()
            .zip(&v)
            .zip(u)
            .map(|((&p, &d), &g)| if passes(p + S::lit(d)) { g.as_f64() } else { 0.0 })
            .collect()
    }

    pub fn grad_t<S: Scalar>(&self, x: &Image<S>, t: &[f64], u: &[S]) -> Result<Vec<f64>> {
        self.check(x)?;
        let w = self.masked(x, t, u);
        let eps = self.epsilon;
        Ok(match self.norm {
            Norm::LInf => w.iter().map(|g| eps * g).collect(),
            Norm::L2 => {
                let n = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0.0 {
                    return Ok(w.iter().map(|g| eps * g).collect());
                }
                let (mut jstar, mut m) = (0, 0.0f64);
                for (j, v) in t.iter().enumerate() {
                    if v.abs() > m {
                        m = v.abs();
                        jstar = j;
                    }
                }
                let wt: f64 = w.iter().zip(t).map(|(a, b)| a * b).sum();
                let n3 = n * n * n;
                (0..t.len())
                    .map(|j| {
                        let dm = if j == jstar { t[j].signum() } else { 0.0 };
                        eps * (m / n * w[j] + wt * (dm / n - m * t[j] / n3))
                    })
                    .collect()
            }
        })
    }

    pub fn vjp<S: Scalar>(&self, x: &Image<S>, t: &[f64], u: &[S]) -> Result<Vec<S>> {
        self.check(x)?;
        Ok(self.masked(x, t, u).into_iter().map(S::lit).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Masking {
    /// Replace a pixel only when all three channels are at or below the
    /// threshold.
    AllChannels,
    /// Replace each channel entry independently, as `where(x ≤ 12, bg, x)`.
    Elementwise,
    /// Replace a pixel when any channel is at or below the threshold: treats
    /// saturated-color backgrounds as background when the foreground is
    /// achromatic.
    AnyChannel,
}

/// Recolors near-black background pixels with the color selected by `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundColor {
    /// Threshold on the 0–255 scale.
    pub threshold: f64,
    pub masking: Masking,
}

impl Default for BackgroundColor {
    fn default() -> Self {
        BackgroundColor {
            threshold: 12.0,
            masking: Masking::AllChannels,
        }
    }
}

impl BackgroundColor {
    fn check<S: Scalar>(x: &Image<S>) -> Result<()> {
        if x.shape().channels != 3 {
            return Err(Error::input(format!(
                "background color model needs 3 channels, got {}",
                x.shape().channels
            )));
        }
        Ok(())
    }

    /// Background color in [0, 1] for normalized `t`: `t = −1 ↦ 0`, `t = 1 ↦ 255/255`.
    pub fn color(t: &[f64]) -> [f64; 3] {
        [0, 1, 2].map(|k| ((t[k] + 1.0) / 2.0).clamp(0.0, 1.0))
    }

    /// Inverse of [`BackgroundColor::color`] for 0–255 RGB values.
    pub fn t_for_rgb(rgb: [f64; 3]) -> [f64; 3] {
        rgb.map(|c| c / 255.0 * 2.0 - 1.0)
    }

    /// Entry-level replacement mask, planar like the image.
    pub fn mask<S: Scalar>(&self, x: &Image<S>) -> Vec<bool> {
        let thr = S::lit(self.threshold) / S::lit(255.0);
        let px = x.pixels();
        let plane = x.shape().plane();
        match self.masking {
            Masking::Elementwise => px.iter().map(|&p| p <= thr).collect(),
            Masking::AllChannels | Masking::AnyChannel => {
                let all = self.masking == Masking::AllChannels;
                let pix: Vec<bool> = (0..plane)
                    .map(|i| {
                        let low = |k: usize| px[k * plane + i] <= thr;
                        if all {
                            (0..3).all(low)
                        } else {
                            (0..3).any(low)
                        }
                    })
                    .collect();
                (0..3).flat_map(|_| pix.iter().copied()).collect()
            }
        }
    }

    pub fn apply<S: Scalar>(&self, x: &Image<S>, t: &[f64]) -> Result<Image<S>> {
        Self::check(x)?;
        let color = Self::color(t);
        let plane = x.shape().plane();
        let mask = self.mask(x);
        let px = x
            .pixels()
            .iter()
            .zip(&mask)
            .enumerate()
            .map(|(i, (&p, &m))| if m { S::lit(color[i / plane]) } else { p })
            .collect();
        Ok(Image::from_clipped(x.shape(), px))
    }

    pub fn grad_t<S: Scalar>(&self, x: &Image<S>, _t: &[f64], u: &[S]) -> Result<Vec<f64>> {
        Self::check(x)?;
        let plane = x.shape().plane();
        let mut g = vec![0.0; 3];
        for (i, (&m, &ui)) in self.mask(x).iter().zip(u).enumerate() {
            if m {
                g[i / plane] += 0.5 * ui.as_f64();
            }
        }
        Ok(g)
    }

    pub fn vjp<S: Scalar>(&self, x: &Image<S>, _t: &[f64], u: &[S]) -> Result<Vec<S>> {
        Self::check(x)?;
        Ok(self
            .mask(x)
            .iter()
            .zip(u)
            .map(|(&m, &ui)| if m { S::zero() } else { ui })
            .collect())
    }
}

/// Rotation about the image center by `π t`, bilinear, zero fill.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Rotation;

impl Rotation {
    pub fn angle(t: f64) -> f64 {
        PI * t
    }

    pub fn apply<S: Scalar>(&self, x: &Image<S>, t: &[f64]) -> Result<Image<S>> {
        let sh = x.shape();
        if sh.height != sh.width {
            return Err(Error::input(format!("rotation needs square images, got {sh}")));
        }
        let theta = Self::angle(t[0]);
        let (s, c) = theta.sin_cos();
        let n = sh.width;
        let center = (n as f64 - 1.0) / 2.0;
        let snap = |v: f64| {
            let r = v.round();
            if (v - r).abs() < 1e-9 {
                r
            } else {
                v
            }
        };
        let mut out = vec![S::zero(); sh.len()];
        for y in 0..n {
            for xx in 0..n {
                let dy = y as f64 - center;
                let dx = xx as f64 - center;
                let sx = snap(center + c * dx + s * dy);
                let sy = snap(center - s * dx + c * dy);
                let (x0, y0) = (sx.floor(), sy.floor());
                let (fx, fy) = (sx - x0, sy - y0);
                let corners = [
                    (y0, x0, (1.0 - fy) * (1.0 - fx)),
                    (y0, x0 + 1.0, (1.0 - fy) * fx),
                    (y0 + 1.0, x0, fy * (1.0 - fx)),
                    (y0 + 1.0, x0 + 1.0, fy * fx),
                ];
                for ch in 0..sh.channels {
                    let mut acc = S::zero();
                    for &(cy, cx, wgt) in &corners {
                        if wgt == 0.0 || cy < 0.0 || cx < 0.0 || cy >= n as f64 || cx >= n as f64 {
                            continue;
                        }
                        acc += S::lit(wgt) * x.get(ch, cy as usize, cx as usize);
                    }
                    out[(ch * n + y) * n + xx] = clip(acc);
                }
            }
        }
        Ok(Image::from_clipped(sh, out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PhotometricKind {
    Brightness,
    Contrast,
    Hue,
}

impl PhotometricKind {
    /// Default strength: brightness shift ±0.5, contrast factor in [½, 2],
    /// hue rotation ±π.
    pub fn default_strength(self) -> f64 {
        match self {
            PhotometricKind::Brightness => 0.5,
            PhotometricKind::Contrast => std::f64::consts::LN_2,
            PhotometricKind::Hue => PI,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhotometricKind::Brightness => "brightness",
            PhotometricKind::Contrast => "contrast",
            PhotometricKind::Hue => "hue",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "brightness" => Ok(PhotometricKind::Brightness),
            "contrast" => Ok(PhotometricKind::Contrast),
            "hue" => Ok(PhotometricKind::Hue),
            _ => Err(Error::config(format!("unknown photometric kind `{s}`"))),
        }
    }
}

/// Pixel-affine photometric shifts with a scalar nuisance:
/// brightness `clip(x + b)`, `b = s t`; contrast `clip(m + a (x − m))`,
/// `a = exp(s t)`, `m` the image mean; hue: rotation of every RGB vector
/// about the gray axis by `h = s t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Photometric {
    pub kind: PhotometricKind,
    pub strength: f64,
}

fn hue_matrix(h: f64) -> [[f64; 3]; 3] {
    let (s, c) = h.sin_cos();
    let k = 1.0 / 3.0;
    let r = s / 3f64.sqrt();
    let d = c + (1.0 - c) * k;
    let o = (1.0 - c) * k;
    [[d, o - r, o + r], [o + r, d, o - r], [o - r, o + r, d]]
}

fn hue_matrix_deriv(h: f64) -> [[f64; 3]; 3] {
    let (s, c) = h.sin_cos();
    let k = 1.0 / 3.0;
    let r = c / 3f64.sqrt();
    let d = -s + s * k;
    let o = s * k;
    [[d, o - r, o + r], [o + r, d, o - r], [o - r, o + r, d]]
}

impl Photometric {
    pub fn new(kind: PhotometricKind) -> Self {
        Photometric {
            kind,
            strength: kind.default_strength(),
        }
    }

    pub fn shift(&self, t: f64) -> f64 {
        self.strength * t
    }

    pub fn factor(&self, t: f64) -> f64 {
        (self.strength * t).exp()
    }

    fn check<S: Scalar>(&self, x: &Image<S>) -> Result<()> {
        if self.kind == PhotometricKind::Hue && x.shape().channels != 3 {
            return Err(Error::input("hue rotation needs 3-channel images"));
        }
        Ok(())
    }

    /// Pre-clip values.
    fn raw<S: Scalar>(&self, x: &Image<S>, t: f64) -> Vec<S> {
        let px = x.pixels();
        match self.kind {
            PhotometricKind::Brightness => {
                let b = S::lit(self.shift(t));
                px.iter().map(|&p| p + b).collect()
            }
            PhotometricKind::Contrast => {
                let a = S::lit(self.factor(t));
                let m = x.mean();
                px.iter().map(|&p| m + a * (p - m)).collect()
            }
            PhotometricKind::Hue => {
                let r = hue_matrix(self.shift(t)).map(|row| row.map(S::lit));
                let plane = x.shape().plane();
                let mut out = vec![S::zero(); px.len()];
                for i in 0..plane {
                    let v = [px[i], px[plane + i], px[2 * plane + i]];
                    for k in 0..3 {
                        out[k * plane + i] = r[k][0] * v[0] + r[k][1] * v[1] + r[k][2] * v[2];
                    }
                }
                out
            }
        }
    }

    pub fn apply<S: Scalar>(&self, x: &Image<S>, t: &[f64]) -> Result<Image<S>> {
        self.check(x)?;
        if t[0] == 0.0 {
            return Ok(x.clone());
        }
        let px = self.raw(x, t[0]).into_iter().map(clip).collect();
        Ok(Image::from_clipped(x.shape(), px))
    }

    pub fn grad_t<S: Scalar>(&self, x: &Image<S>, t: &[f64], u: &[S]) -> Result<Vec<f64>> {
        self.check(x)?;
        let z = self.raw(x, t[0]);
        let px = x.pixels();
        let mut g = 0.0;
        match self.kind {
            PhotometricKind::Brightness => {
                for (&zi, &ui) in z.iter().zip(u) {
                    if passes(zi) {
                        g += ui.as_f64();
                    }
                }
                g *= self.strength;
            }
            PhotometricKind::Contrast => {
                let a = self.factor(t[0]);
                let m = x.mean().as_f64();
                for ((&zi, &ui), &p) in z.iter().zip(u).zip(px) {
                    if passes(zi) {
                        g += ui.as_f64() * (p.as_f64() - m);
                    }
                }
                g *= a * self.strength;
            }
            PhotometricKind::Hue => {
                let d = hue_matrix_deriv(self.shift(t[0]));
                let plane = x.shape().plane();
                for i in 0..plane {
                    let v = [0, 1, 2].map(|k| px[k * plane + i].as_f64());
                    for k in 0..3 {
                        let j = k * plane + i;
                        if passes(z[j]) {
                            g += u[j].as_f64() * (d[k][0] * v[0] + d[k][1] * v[1] + d[k][2] * v[2]);
                        }
                    }
                }
                g *= self.strength;
            }
        }
        Ok(vec![g])
    }

    pub fn vjp<S: Scalar>(&self, x: &Image<S>, t: &[f64], u: &[S]) -> Result<Vec<S>> {
        self.check(x)?;
        let z = self.raw(x, t[0]);
        let w: Vec<S> = z
            .iter()
            .zip(u)
            .map(|(&zi, &ui)| if passes(zi) { ui } else { S::zero() })
            .collect();
        Ok(match self.kind {
            PhotometricKind::Brightness => w,
            PhotometricKind::Contrast => {
                let a = S::lit(self.factor(t[0]));
                let n = S::lit(w.len() as f64);
                let spread = (S::one() - a) / n * w.iter().copied().sum::<S>();
                w.iter().map(|&wi| a * wi + spread).collect()
            }
            PhotometricKind::Hue => {
                let r = hue_matrix(self.shift(t[0])).map(|row| row.map(S::lit));
                let plane = x.shape().plane();
                let mut out = vec![S::zero(); w.len()];
                for i in 0..plane {
                    let v = [w[i], w[plane + i], w[2 * plane + i]];
                    for k in 0..3 {
                        out[k * plane + i] = r[0][k] * v[0] + r[1][k] * v[1] + r[2][k] * v[2];
                    }
                }
                out
            }
        })
    }
}
