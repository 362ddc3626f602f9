use std::sync::Arc;

use crate::diffcore::image::{Image, Shape};
use crate::error::{Error, Result};
use crate::genmodel::{Direction, TranslationModel};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::variation::analytic::{
    Additive, BackgroundColor, Masking, Norm, Photometric, PhotometricKind, Rotation,
};
use crate::variation::space::{NuisanceParam, NuisanceSpace};

/// Affine bridge from the box to the Gaussian style prior: `s = 2 t`.
pub const DEFAULT_STYLE_SCALE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompositionMode {
    /// One δ drives both models.
    Shared,
    /// δ = (δ_outer, δ_inner), each model reads its own block.
    Independent,
}

/// Decoder of a translation network used as `G(x, δ) = Dec(content(x), scale · t)`.
#[derive(Clone, Debug)]
pub struct Learned<S> {
    pub model: Arc<TranslationModel<S>>,
    pub direction: Direction,
    pub style_scale: f64,
    /// Snapshot file the model was loaded from, kept for descriptors.
    pub source: Option<String>,
}

#[derive(Clone, Debug)]
pub enum ModelKind<S> {
    Identity,
    Additive(Additive),
    Rotation(Rotation),
    BackgroundColor(BackgroundColor),
    Photometric(Photometric),
    Learned(Learned<S>),
    /// `G(x, δ) = outer(inner(x, δ), δ)`.
    Composed {
        outer: Box<VariationModel<S>>,
        inner: Box<VariationModel<S>>,
        mode: CompositionMode,
    },
}

/// A model of natural variation `G : images × Δ → images`.
#[derive(Clone, Debug)]
pub struct VariationModel<S> {
    space: NuisanceSpace,
    kind: ModelKind<S>,
}

impl<S: Scalar> VariationModel<S> {
    pub fn identity(q: usize) -> Self {
        VariationModel {
            space: NuisanceSpace::symmetric(q),
            kind: ModelKind::Identity,
        }
    }

    /// Norm-bounded additive model; `q` equals the pixel count of `shape`.
    pub fn additive(epsilon: f64, norm: Norm, shape: Shape) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::input("additive model needs epsilon > 0"));
        }
        Ok(VariationModel {
            space: NuisanceSpace::symmetric(shape.len()),
            kind: ModelKind::Additive(Additive { epsilon, norm, shape }),
        })
    }

    pub fn rotation() -> Self {
        VariationModel {
            space: NuisanceSpace::symmetric(1),
            kind: ModelKind::Rotation(Rotation),
        }
    }

    pub fn background_color() -> Self {
        Self::background_color_with(Masking::AllChannels)
    }

    pub fn background_color_with(masking: Masking) -> Self {
        VariationModel {
            space: NuisanceSpace::symmetric(3),
            kind: ModelKind::BackgroundColor(BackgroundColor {
                masking,
                ..Default::default()
            }),
        }
    }

    /// Background threshold on the 0–255 scale (default 12).
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        if let ModelKind::BackgroundColor(b) = &mut self.kind {
            b.threshold = threshold;
        }
        self
    }

    pub fn photometric(kind: PhotometricKind) -> Self {
        Self::photometric_with(kind, kind.default_strength())
    }

    pub fn photometric_with(kind: PhotometricKind, strength: f64) -> Self {
        VariationModel {
            space: NuisanceSpace::symmetric(1),
            kind: ModelKind::Photometric(Photometric { kind, strength }),
        }
    }

    pub fn learned(learned: Learned<S>, space: NuisanceSpace) -> Result<Self> {
        let q = learned.model.style_dim();
        if space.dim() != q {
            return Err(Error::input(format!(
                "nuisance dimension {} does not match style dimension {q}",
                space.dim()
            )));
        }
        Ok(VariationModel {
            space,
            kind: ModelKind::Learned(learned),
        })
    }

    /// `G(x, δ) = outer(inner(x, δ), δ)` with a shared δ.
    pub fn compose(outer: Self, inner: Self) -> Result<Self> {
        if outer.space != inner.space {
            return Err(Error::input(
                "shared-δ composition needs identical nuisance spaces",
            ));
        }
        Self::check_shapes(&outer, &inner)?;
        Ok(VariationModel {
            space: outer.space.clone(),
            kind: ModelKind::Composed {
                outer: Box::new(outer),
                inner: Box::new(inner),
                mode: CompositionMode::Shared,
            },
        })
    }

    /// Composition over the product space `Δ_outer × Δ_inner`.
    pub fn compose_independent(outer: Self, inner: Self) -> Result<Self> {
        Self::check_shapes(&outer, &inner)?;
        Ok(VariationModel {
            space: outer.space.concat(&inner.space),
            kind: ModelKind::Composed {
                outer: Box::new(outer),
                inner: Box::new(inner),
                mode: CompositionMode::Independent,
            },
        })
    }

    fn check_shapes(a: &Self, b: &Self) -> Result<()> {
        match (a.fixed_shape(), b.fixed_shape()) {
            (Some(x), Some(y)) if x != y => Err(Error::input(format!(
                "cannot compose models on {x} and {y} images"
            ))),
            _ => Ok(()),
        }
    }

    /// Image shape the model is tied to, if any.
    pub fn fixed_shape(&self) -> Option<Shape> {
        match &self.kind {
            ModelKind::Additive(a) => Some(a.shape),
            ModelKind::Learned(l) => Some(l.model.image_shape()),
            ModelKind::Composed { outer, inner, .. } => outer.fixed_shape().or(inner.fixed_shape()),
            _ => None,
        }
    }

    /// Replaces the box; the model maps the new box affinely onto its
    /// physical range.
    pub fn with_space(mut self, space: NuisanceSpace) -> Result<Self> {
        if space.dim() != self.space.dim() {
            return Err(Error::input("replacement space changes the nuisance dimension"));
        }
        if matches!(self.kind, ModelKind::Composed { .. }) {
            return Err(Error::input("composed models take their spaces from their parts"));
        }
        self.space = space;
        Ok(self)
    }

    pub fn space(&self) -> &NuisanceSpace {
        &self.space
    }

    pub fn kind(&self) -> &ModelKind<S> {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            ModelKind::Identity => "identity",
            ModelKind::Additive(_) => "additive",
            ModelKind::Rotation(_) => "rotation",
            ModelKind::BackgroundColor(_) => "background-color",
            ModelKind::Photometric(_) => "photometric",
            ModelKind::Learned(_) => "learned",
            ModelKind::Composed { .. } => "composed",
        }
    }

    pub fn is_differentiable(&self) -> bool {
        match &self.kind {
            ModelKind::Rotation(_) => false,
            ModelKind::Composed { outer, inner, .. } => {
                outer.is_differentiable() && inner.is_differentiable()
            }
            _ => true,
        }
    }

    /// The designated δ₀ with `G(x, δ₀) = x`, when the model has one.
    pub fn neutral(&self) -> Option<NuisanceParam> {
        let t: Vec<f64> = match &self.kind {
            ModelKind::Identity
            | ModelKind::Additive(_)
            | ModelKind::Rotation(_)
            | ModelKind::Photometric(_) => vec![0.0; self.space.dim()],
            ModelKind::BackgroundColor(_) | ModelKind::Learned(_) => return None,
            ModelKind::Composed { outer, inner, mode } => {
                let (a, b) = (outer.neutral()?, inner.neutral()?);
                return match mode {
                    CompositionMode::Shared if a == b => Some(a),
                    CompositionMode::Shared => None,
                    CompositionMode::Independent => {
                        Some(NuisanceParam([a.into_vec(), b.into_vec()].concat()))
                    }
                };
            }
        };
        let delta: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(i, &ti)| self.space.lower()[i] + (ti + 1.0) / 2.0 * self.space.width(i))
            .collect();
        self.space.param(delta).ok()
    }

    pub fn sample(&self, rng: &mut Rng) -> NuisanceParam {
        self.space.sample_uniform(rng)
    }

    fn checked<'a>(&self, delta: &'a NuisanceParam) -> Result<&'a [f64]> {
        if !self.space.contains(delta.values()) {
            return Err(Error::input(format!(
                "δ of length {} is not inside the model's {}-dimensional box; project first",
                delta.len(),
                self.space.dim()
            )));
        }
        Ok(delta.values())
    }

    /// `x' = G(x, δ)`.
    pub fn apply(&self, x: &Image<S>, delta: &NuisanceParam) -> Result<Image<S>> {
        let d = self.checked(delta)?;
        self.apply_raw(x, d)
    }

    fn split<'a>(outer: &Self, d: &'a [f64], mode: CompositionMode) -> (&'a [f64], &'a [f64]) {
        match mode {
            CompositionMode::Shared => (d, d),
            CompositionMode::Independent => d.split_at(outer.space.dim()),
        }
    }

    fn apply_raw(&self, x: &Image<S>, d: &[f64]) -> Result<Image<S>> {
        if let ModelKind::Composed { outer, inner, mode } = &self.kind {
            let (d_outer, d_inner) = Self::split(outer, d, *mode);
            let mid = inner.apply_raw(x, d_inner)?;
            return outer.apply_raw(&mid, d_outer);
        }
        let (t, _) = self.space.normalized(d);
        match &self.kind {
            ModelKind::Identity => Ok(x.clone()),
            ModelKind::Additive(a) => a.apply(x, &t),
            ModelKind::Rotation(r) => r.apply(x, &t),
            ModelKind::BackgroundColor(b) => b.apply(x, &t),
            ModelKind::Photometric(p) => p.apply(x, &t),
            ModelKind::Learned(l) => {
                let style = self.style(l, &t);
                l.model.translate(l.direction, x, &style)
            }
            ModelKind::Composed { .. } => unreachable!(),
        }
    }

    fn style(&self, l: &Learned<S>, t: &[f64]) -> Vec<S> {
        t.iter().map(|&v| S::lit(l.style_scale * v)).collect()
    }

    /// `∇_δ ⟨upstream, G(x, δ)⟩`.
    pub fn grad_nuisance(&self, x: &Image<S>, delta: &NuisanceParam, upstream: &[S]) -> Result<Vec<f64>> {
        if !self.is_differentiable() {
            return Err(Error::capability(format!(
                "{} model is not differentiable in δ",
                self.kind_name()
            )));
        }
        let d = self.checked(delta)?;
        if upstream.len() != x.shape().len() {
            return Err(Error::input("upstream gradient does not match image shape"));
        }
        self.grad_raw(x, d, upstream)
    }

    fn grad_raw(&self, x: &Image<S>, d: &[f64], u: &[S]) -> Result<Vec<f64>> {
        if let ModelKind::Composed { outer, inner, mode } = &self.kind {
            let (d_outer, d_inner) = Self::split(outer, d, *mode);
            let mid = inner.apply_raw(x, d_inner)?;
            let g_outer = outer.grad_raw(&mid, d_outer, u)?;
            let u_mid = outer.vjp_raw(&mid, d_outer, u)?;
            let g_inner = inner.grad_raw(x, d_inner, &u_mid)?;
            return Ok(match mode {
                CompositionMode::Shared => g_outer.iter().zip(&g_inner).map(|(a, b)| a + b).collect(),
                CompositionMode::Independent => [g_outer, g_inner].concat(),
            });
        }
        let (t, dt) = self.space.normalized(d);
        let gt = match &self.kind {
            ModelKind::Identity => vec![0.0; d.len()],
            ModelKind::Additive(a) => a.grad_t(x, &t, u)?,
            ModelKind::BackgroundColor(b) => b.grad_t(x, &t, u)?,
            ModelKind::Photometric(p) => p.grad_t(x, &t, u)?,
            ModelKind::Learned(l) => {
                let style = self.style(l, &t);
                let (_, gs) = l.model.translate_vjp(l.direction, x, &style, u)?;
                gs.iter().map(|g| g.as_f64() * l.style_scale).collect()
            }
            ModelKind::Rotation(_) | ModelKind::Composed { .. } => unreachable!(),
        };
        Ok(gt.iter().zip(&dt).map(|(g, s)| g * s).collect())
    }

    /// `∇_x ⟨upstream, G(x, δ)⟩`.
    pub fn vjp_input(&self, x: &Image<S>, delta: &NuisanceParam, upstream: &[S]) -> Result<Vec<S>> {
        if !self.is_differentiable() {
            return Err(Error::capability(format!(
                "{} model is not differentiable",
                self.kind_name()
            )));
        }
        let d = self.checked(delta)?;
        if upstream.len() != x.shape().len() {
            return Err(Error::input("upstream gradient does not match image shape"));
        }
        self.vjp_raw(x, d, upstream)
    }

    fn vjp_raw(&self, x: &Image<S>, d: &[f64], u: &[S]) -> Result<Vec<S>> {
        if let ModelKind::Composed { outer, inner, mode } = &self.kind {
            let (d_outer, d_inner) = Self::split(outer, d, *mode);
            let mid = inner.apply_raw(x, d_inner)?;
            let u_mid = outer.vjp_raw(&mid, d_outer, u)?;
            return inner.vjp_raw(x, d_inner, &u_mid);
        }
        let (t, _) = self.space.normalized(d);
        match &self.kind {
            ModelKind::Identity => Ok(u.to_vec()),
            ModelKind::Additive(a) => a.vjp(x, &t, u),
            ModelKind::BackgroundColor(b) => b.vjp(x, &t, u),
            ModelKind::Photometric(p) => p.vjp(x, &t, u),
            ModelKind::Learned(l) => {
                let style = self.style(l, &t);
                Ok(l.model.translate_vjp(l.direction, x, &style, u)?.0)
            }
            ModelKind::Rotation(_) | ModelKind::Composed { .. } => unreachable!(),
        }
    }

    /// `n` draws `G(x, δᵢ)` with δᵢ uniform over Δ.
    pub fn manifold_sample(&self, x: &Image<S>, n: usize, rng: &mut Rng) -> Result<Vec<Image<S>>> {
        if n == 0 {
            return Err(Error::input("manifold_sample needs n >= 1"));
        }
        (0..n)
            .map(|_| {
                let d = self.sample(rng);
                self.apply(x, &d)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::gradcheck::check_coords;
    use crate::genmodel::{MunitConfig, TranslationModel};
    use crate::rng::stream;
    use rand::Rng as _;

    fn random_image(shape: Shape, seed: u64) -> Image<f64> {
        let mut r = stream(seed, &[]);
        Image::new(shape, (0..shape.len()).map(|_| r.gen_range(0.05..0.95)).collect()).unwrap()
    }

    fn dp(v: &[f64]) -> NuisanceParam {
        NuisanceParam(v.to_vec())
    }

    /// FD check of `δ ↦ ⟨u, G(x, δ)⟩` at interior random δ.
    fn fd_nuisance(m: &VariationModel<f64>, x: &Image<f64>, seed: u64) {
        let mut r = stream(seed, &[1]);
        for _ in 0..10 {
            let u: Vec<f64> = (0..x.shape().len()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..m.space().dim())
                .map(|i| {
                    let (lo, w) = (m.space().lower()[i], m.space().width(i));
                    lo + w * r.gen_range(0.05..0.95)
                })
                .collect();
            let g = m.grad_nuisance(x, &dp(&d), &u).unwrap();
            let coords: Vec<usize> = (0..d.len()).collect();
            let res = check_coords(&d, &g, &coords, 1e-6, |v| {
                let y = m.apply(x, &dp(v)).unwrap();
                y.pixels().iter().zip(&u).map(|(a, b)| a * b).sum()
            });
            assert!(res.passes(1e-4), "{} {res:?}", m.kind_name());
        }
    }

    /// FD check of `x ↦ ⟨u, G(x, δ)⟩` along a few pixel coordinates.
    fn fd_input(m: &VariationModel<f64>, x: &Image<f64>, d: &NuisanceParam) {
        let mut r = stream(9, &[]);
        let u: Vec<f64> = (0..x.shape().len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let g = m.vjp_input(x, d, &u).unwrap();
        let coords: Vec<usize> = (0..12).map(|_| r.gen_range(0..x.shape().len())).collect();
        let res = check_coords(x.pixels(), &g, &coords, 1e-6, |v| {
            let xi = Image::new(x.shape(), v.to_vec()).unwrap();
            m.apply(&xi, d).unwrap().pixels().iter().zip(&u).map(|(a, b)| a * b).sum()
        });
        assert!(res.passes(1e-4), "{} {res:?}", m.kind_name());
    }

    #[test]
    fn additive_origin_and_corner() {
        let sh = Shape::new(3, 4, 4);
        let x = random_image(sh, 1);
        let m = VariationModel::<f64>::additive(8.0 / 255.0, Norm::LInf, sh).unwrap();
        assert_eq!(m.apply(&x, &m.space().origin()).unwrap(), x);
        let corner: Vec<f64> = (0..sh.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let y = m.apply(&x, &dp(&corner)).unwrap();
        for (i, (a, b)) in y.pixels().iter().zip(x.pixels()).enumerate() {
            let want = (b + corner[i] * 8.0 / 255.0).clamp(0.0, 1.0);
            assert_eq!(*a, want);
        }
    }

    #[test]
    fn additive_random_delta_stays_in_ball() {
        let sh = Shape::new(3, 6, 6);
        let m = VariationModel::<f64>::additive(8.0 / 255.0, Norm::LInf, sh).unwrap();
        let mut r = stream(3, &[]);
        for s in 0..20 {
            let x = random_image(sh, s);
            let y = m.apply(&x, &m.sample(&mut r)).unwrap();
            for (a, b) in y.pixels().iter().zip(x.pixels()) {
                assert!((a - b).abs() <= 8.0 / 255.0 + 1e-15);
            }
        }
        let l2 = VariationModel::<f64>::additive(0.5, Norm::L2, sh).unwrap();
        for s in 0..20 {
            let x = Image::filled(sh, 0.5).unwrap();
            let y = l2.apply(&x, &l2.sample(&mut r)).unwrap();
            let n: f64 = y.pixels().iter().zip(x.pixels()).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(n.sqrt() <= 0.5 + 1e-12, "sample {s}: {}", n.sqrt());
        }
    }

    #[test]
    fn rotation_examples() {
        let m = VariationModel::<f64>::rotation();
        let sh = Shape::new(1, 4, 4);
        let x = Image::new(sh, (0..16).map(|v| v as f64 / 15.0).collect()).unwrap();
        assert_eq!(m.apply(&x, &dp(&[0.0])).unwrap(), x);
        // π/2: out[y][x] = in[n−1−x][y].
        let y = m.apply(&x, &dp(&[0.5])).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(y.get(0, r, c), x.get(0, 3 - c, r));
            }
        }
        let card = Image::new(Shape::new(1, 5, 5), (0..25).map(|v| ((v * 7) % 11) as f64 / 10.0).collect()).unwrap();
        let twice = m.apply(&m.apply(&card, &dp(&[1.0])).unwrap(), &dp(&[1.0])).unwrap();
        for (a, b) in twice.pixels().iter().zip(card.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(m.neutral().is_some());
        assert!(matches!(
            m.apply(&random_image(Shape::new(1, 3, 4), 0), &dp(&[0.1])),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn rotation_refuses_gradients() {
        let m = VariationModel::<f64>::rotation();
        let x = random_image(Shape::new(1, 4, 4), 0);
        let e = m.grad_nuisance(&x, &dp(&[0.2]), &[0.0; 16]).unwrap_err();
        assert!(matches!(e, Error::Capability(_)));
    }

    #[test]
    fn background_color_examples() {
        let m = VariationModel::<f64>::background_color();
        let sh = Shape::new(3, 2, 2);
        let black = Image::filled(sh, 0.0).unwrap();
        let red = BackgroundColor::t_for_rgb([255.0, 0.0, 0.0]);
        let y = m.apply(&black, &dp(&red)).unwrap();
        assert_eq!(y.channel(0), &[1.0; 4]);
        assert_eq!(y.channel(1), &[0.0; 4]);
        assert_eq!(y.channel(2), &[0.0; 4]);

        let mut px = vec![0.0; 12];
        for c in 0..3 {
            px[c * 4] = 200.0 / 255.0;
        }
        let x = Image::new(sh, px).unwrap();
        let blue = BackgroundColor::t_for_rgb([0.0, 0.0, 255.0]);
        let y = m.apply(&x, &dp(&blue)).unwrap();
        for c in 0..3 {
            assert_eq!(y.get(c, 0, 0), 200.0 / 255.0);
        }
        assert_eq!(&y.channel(2)[1..], &[1.0; 3]);
        assert_eq!(&y.channel(0)[1..], &[0.0; 3]);

        let zero = BackgroundColor::t_for_rgb([0.0, 0.0, 0.0]);
        assert_eq!(m.apply(&x, &dp(&zero)).unwrap(), x);
        assert!(matches!(
            m.apply(&random_image(Shape::new(1, 2, 2), 0), &dp(&zero)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn photometric_examples() {
        let sh = Shape::new(3, 3, 3);
        let x = random_image(sh, 4);
        for k in [PhotometricKind::Brightness, PhotometricKind::Contrast, PhotometricKind::Hue] {
            let m = VariationModel::<f64>::photometric(k);
            assert_eq!(m.apply(&x, &m.neutral().unwrap()).unwrap(), x);
        }
        let b = VariationModel::<f64>::photometric(PhotometricKind::Brightness);
        let y = b.apply(&Image::filled(sh, 0.5).unwrap(), &dp(&[0.4])).unwrap();
        assert!(y.pixels().iter().all(|v| (v - 0.7).abs() < 1e-12));

        let c = VariationModel::<f64>::photometric(PhotometricKind::Contrast);
        let two = Image::new(Shape::new(1, 1, 2), vec![0.4, 0.6]).unwrap();
        let y = c.apply(&two, &dp(&[1.0])).unwrap();
        assert!((y.pixels()[0] - 0.3).abs() < 1e-12 && (y.pixels()[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn brightness_gradient_counts_unclipped_pixels() {
        let b = VariationModel::<f64>::photometric(PhotometricKind::Brightness);
        let sh = Shape::new(1, 2, 3);
        let x = Image::new(sh, vec![0.1, 0.5, 0.95, 0.99, 0.3, 0.0]).unwrap();
        // shift 0.5·0.2 = 0.1 clips 0.95 and 0.99.
        let g = b.grad_nuisance(&x, &dp(&[0.2]), &[1.0; 6]).unwrap();
        assert!((g[0] - 4.0 * 0.5).abs() < 1e-12, "{g:?}");
        assert_eq!(b.grad_nuisance(&x, &dp(&[0.2]), &[0.0; 6]).unwrap(), vec![0.0]);
    }

    #[test]
    fn nuisance_gradients_match_finite_differences() {
        let rgb = Shape::new(3, 5, 5);
        let x = random_image(rgb, 11);
        let mut dark = x.clone().into_pixels();
        for (i, p) in dark.iter_mut().enumerate() {
            if i % 3 != 0 {
                *p *= 0.04;
            }
        }
        let dark = Image::new(rgb, dark).unwrap();
        let models = vec![
            VariationModel::additive(0.1, Norm::LInf, rgb).unwrap(),
            VariationModel::additive(0.3, Norm::L2, rgb).unwrap(),
            VariationModel::photometric(PhotometricKind::Brightness),
            VariationModel::photometric(PhotometricKind::Contrast),
            VariationModel::photometric(PhotometricKind::Hue),
            VariationModel::photometric(PhotometricKind::Hue)
                .with_space(NuisanceSpace::new(vec![0.0], vec![0.5]).unwrap())
                .unwrap(),
            VariationModel::compose(
                VariationModel::photometric(PhotometricKind::Brightness),
                VariationModel::photometric(PhotometricKind::Contrast),
            )
            .unwrap(),
            VariationModel::compose_independent(
                VariationModel::photometric(PhotometricKind::Hue),
                VariationModel::background_color(),
            )
            .unwrap(),
        ];
        for (i, m) in models.iter().enumerate() {
            fd_nuisance(m, &x, i as u64);
            fd_input(m, &x, &m.space().origin());
        }
        for masking in [Masking::AllChannels, Masking::Elementwise, Masking::AnyChannel] {
            let m = VariationModel::background_color_with(masking);
            fd_nuisance(&m, &dark, 5);
        }
    }

    #[test]
    fn learned_model_shape_and_gradients() {
        let cfg = MunitConfig::new(Shape::new(3, 4, 4), 2, 2, 3);
        let t = TranslationModel::<f64>::init(cfg, &mut stream(1, &[])).unwrap();
        let m = crate::genmodel::into_variation_model(Arc::new(t), Direction::AtoB, NuisanceSpace::symmetric(2))
            .unwrap();
        let x = random_image(cfg.image, 2);
        let y = m.apply(&x, &dp(&[0.3, -0.6])).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        fd_nuisance(&m, &x, 3);
        fd_input(&m, &x, &dp(&[0.3, -0.6]));
        assert!(m.neutral().is_none());
    }

    #[test]
    fn learned_requires_matching_dimension() {
        let cfg = MunitConfig::new(Shape::new(3, 4, 4), 2, 2, 3);
        let t = Arc::new(TranslationModel::<f64>::zeros(cfg).unwrap());
        let e = crate::genmodel::into_variation_model(t, Direction::AtoB, NuisanceSpace::symmetric(3));
        assert!(matches!(e, Err(Error::Input(_))));
    }

    #[test]
    fn composition_identities() {
        let sh = Shape::new(3, 4, 4);
        let g = VariationModel::<f64>::photometric(PhotometricKind::Contrast);
        let c = VariationModel::compose(VariationModel::identity(1), g.clone()).unwrap();
        let mut r = stream(5, &[]);
        for s in 0..20 {
            let x = random_image(sh, s);
            let d = g.sample(&mut r);
            assert_eq!(c.apply(&x, &d).unwrap(), g.apply(&x, &d).unwrap());
        }
        // brightness(b) ∘ contrast(a) on a constant image is clip(c + b).
        let bc = VariationModel::compose(
            VariationModel::<f64>::photometric(PhotometricKind::Brightness),
            VariationModel::photometric(PhotometricKind::Contrast),
        )
        .unwrap();
        let x = Image::filled(sh, 0.6).unwrap();
        for d in [-1.0, -0.3, 0.5, 1.0] {
            let y = bc.apply(&x, &dp(&[d])).unwrap();
            let want = (0.6 + 0.5 * d).clamp(0.0, 1.0);
            assert!(y.pixels().iter().all(|v| (v - want).abs() < 1e-12));
        }
    }

    #[test]
    fn composition_is_associative() {
        let b = || VariationModel::<f64>::photometric(PhotometricKind::Brightness);
        let c = || VariationModel::<f64>::photometric(PhotometricKind::Contrast);
        let h = || VariationModel::<f64>::photometric(PhotometricKind::Hue);
        let left = VariationModel::compose(b(), VariationModel::compose(c(), h()).unwrap()).unwrap();
        let right = VariationModel::compose(VariationModel::compose(b(), c()).unwrap(), h()).unwrap();
        let mut r = stream(8, &[]);
        for s in 0..20 {
            let x = random_image(Shape::new(3, 3, 3), s);
            let d = left.sample(&mut r);
            assert_eq!(left.apply(&x, &d).unwrap(), right.apply(&x, &d).unwrap());
        }
    }

    #[test]
    fn composition_checks() {
        let e = VariationModel::<f64>::compose(VariationModel::rotation(), VariationModel::background_color());
        assert!(matches!(e, Err(Error::Input(_))));
        let e = VariationModel::<f64>::compose(
            VariationModel::additive(0.1, Norm::LInf, Shape::new(1, 1, 2)).unwrap(),
            VariationModel::additive(0.1, Norm::LInf, Shape::new(2, 1, 1)).unwrap(),
        );
        assert!(matches!(e, Err(Error::Input(_))));
        let ind =
            VariationModel::<f64>::compose_independent(VariationModel::rotation(), VariationModel::background_color())
                .unwrap();
        assert_eq!(ind.space().dim(), 4);
        assert!(!ind.is_differentiable());
    }

    #[test]
    fn out_of_box_delta_is_rejected() {
        let m = VariationModel::<f64>::photometric(PhotometricKind::Brightness);
        let x = random_image(Shape::new(1, 2, 2), 0);
        assert!(matches!(m.apply(&x, &dp(&[1.5])), Err(Error::Input(_))));
        assert!(matches!(m.apply(&x, &dp(&[0.0, 0.0])), Err(Error::Input(_))));
    }

    #[test]
    fn manifold_samples() {
        let sh = Shape::new(3, 4, 4);
        let x = random_image(sh, 0);
        let mut r = stream(2, &[]);
        let id = VariationModel::<f64>::identity(2);
        let s = id.manifold_sample(&x, 5, &mut r).unwrap();
        assert!(s.len() == 5 && s.iter().all(|y| *y == x));
        let add = VariationModel::<f64>::additive(8.0 / 255.0, Norm::LInf, sh).unwrap();
        for y in add.manifold_sample(&x, 10, &mut r).unwrap() {
            for (a, b) in y.pixels().iter().zip(x.pixels()) {
                assert!((a - b).abs() <= 8.0 / 255.0 + 1e-15);
            }
        }
        assert!(matches!(id.manifold_sample(&x, 0, &mut r), Err(Error::Input(_))));
    }
}
