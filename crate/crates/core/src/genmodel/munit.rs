//! MUNIT-lite: per-domain content/style encoders, decoders and
//! discriminators sharing one flat parameter vector.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::arch::{Architecture, Layer};
use crate::diffcore::image::{Image, Shape};
use crate::diffcore::network::{sigmoid, Mode, Network, Trace};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{sign, Scalar};

/// Translation direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    AtoB,
    BtoA,
}

impl Direction {
    fn source(self) -> Domain {
        match self {
            Direction::AtoB => Domain::A,
            Direction::BtoA => Domain::B,
        }
    }

    fn target(self) -> Domain {
        match self {
            Direction::AtoB => Domain::B,
            Direction::BtoA => Domain::A,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::AtoB => "a2b",
            Direction::BtoA => "b2a",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a2b" => Ok(Direction::AtoB),
            "b2a" => Ok(Direction::BtoA),
            _ => Err(Error::config(format!("unknown direction `{s}` (a2b|b2a)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    A,
    B,
}

/// The eight parameter blocks, in storage order. Generator blocks come
/// first so the generator and discriminator halves are contiguous.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    ContentA,
    StyleA,
    DecoderA,
    ContentB,
    StyleB,
    DecoderB,
    DiscA,
    DiscB,
}

impl Part {
    pub const ALL: [Part; 8] = [
        Part::ContentA,
        Part::StyleA,
        Part::DecoderA,
        Part::ContentB,
        Part::StyleB,
        Part::DecoderB,
        Part::DiscA,
        Part::DiscB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Part::ContentA => "enc_content_a",
            Part::StyleA => "enc_style_a",
            Part::DecoderA => "dec_a",
            Part::ContentB => "enc_content_b",
            Part::StyleB => "enc_style_b",
            Part::DecoderB => "dec_b",
            Part::DiscA => "dis_a",
            Part::DiscB => "dis_b",
        }
    }

    fn of(domain: Domain, role: Role) -> Part {
        match (domain, role) {
            (Domain::A, Role::Content) => Part::ContentA,
            (Domain::A, Role::Style) => Part::StyleA,
            (Domain::A, Role::Decoder) => Part::DecoderA,
            (Domain::A, Role::Disc) => Part::DiscA,
            (Domain::B, Role::Content) => Part::ContentB,
            (Domain::B, Role::Style) => Part::StyleB,
            (Domain::B, Role::Decoder) => Part::DecoderB,
            (Domain::B, Role::Disc) => Part::DiscB,
        }
    }

    fn role(self) -> Role {
        match self {
            Part::ContentA | Part::ContentB => Role::Content,
            Part::StyleA | Part::StyleB => Role::Style,
            Part::DecoderA | Part::DecoderB => Role::Decoder,
            Part::DiscA | Part::DiscB => Role::Disc,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Content,
    Style,
    Decoder,
    Disc,
}

/// Network sizes. The descriptor form is
/// `munit:3x8x8;content=4;style=2;hidden=8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MunitConfig {
    pub image: Shape,
    pub content_channels: usize,
    pub style_dim: usize,
    pub hidden: usize,
}

impl MunitConfig {
    pub fn new(image: Shape, content_channels: usize, style_dim: usize, hidden: usize) -> Self {
        MunitConfig {
            image,
            content_channels,
            style_dim,
            hidden,
        }
    }

    fn pool(&self) -> &'static str {
        if self.image.height % 2 == 0 && self.image.width % 2 == 0 {
            "p2,"
        } else {
            ""
        }
    }

    fn architectures(&self) -> Result<[Architecture; 4]> {
        let (h, cc, q) = (self.hidden, self.content_channels, self.style_dim);
        if h == 0 || cc == 0 || q == 0 {
            return Err(Error::config("munit sizes must be positive"));
        }
        let img = self.image;
        let p = self.pool();
        Ok([
            Architecture::from_layers(img, &format!("c{h}-3,lrelu,c{cc}-3"))?,
            Architecture::from_layers(img, &format!("c{h}-3,lrelu,{p}c{h}-3,lrelu,flat,fc{q}"))?,
            Architecture::from_layers(
                Shape::new(cc + q, img.height, img.width),
                &format!("c{}-3,lrelu,c{h}-3,lrelu,c{}-3,sigmoid", 2 * h, img.channels),
            )?,
            Architecture::from_layers(img, &format!("c{h}-3,lrelu,{p}c{}-3,lrelu,flat,fc1", 2 * h))?,
        ])
    }
}

impl fmt::Display for MunitConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "munit:{};content={};style={};hidden={}",
            self.image, self.content_channels, self.style_dim, self.hidden
        )
    }
}

impl FromStr for MunitConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("malformed munit descriptor `{s}`"));
        let rest = s.strip_prefix("munit:").ok_or_else(bad)?;
        let mut fields = rest.split(';');
        let dims: Vec<usize> = fields
            .next()
            .ok_or_else(bad)?
            .split('x')
            .map(|d| d.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [c, h, w] = dims[..] else { return Err(bad()) };
        let (mut content, mut style, mut hidden) = (None, None, None);
        for kv in fields {
            let (k, v) = kv.split_once('=').ok_or_else(bad)?;
            let v: usize = v.parse().map_err(|_| bad())?;
            match k {
                "content" => content = Some(v),
                "style" => style = Some(v),
                "hidden" => hidden = Some(v),
                _ => return Err(bad()),
            }
        }
        Ok(MunitConfig::new(
            Shape::new(c, h, w),
            content.ok_or_else(bad)?,
            style.ok_or_else(bad)?,
            hidden.ok_or_else(bad)?,
        ))
    }
}

/// Standard Gaussian prior over style codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StylePrior {
    pub dim: usize,
}

impl StylePrior {
    pub fn sample<S: Scalar>(&self, rng: &mut Rng) -> Vec<S> {
        (0..self.dim)
            .map(|_| S::lit(StandardNormal.sample(rng)))
            .collect()
    }
}

/// How the L1 reconstruction norms are reduced over code/image entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum L1Reduction {
    /// `‖·‖₁` summed over entries.
    Sum,
    /// `‖·‖₁` divided by the number of entries.
    Mean,
}

/// Loss weights plus the training schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct MunitHyper {
    pub lambda_x: f64,
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iterations: usize,
    /// Iteration counts after which a snapshot is taken; ascending.
    pub snapshots: Vec<usize>,
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub reduction: L1Reduction,
}

impl Default for MunitHyper {
    fn default() -> Self {
        MunitHyper {
            lambda_x: 10.0,
            lambda_c: 1.0,
            lambda_s: 1.0,
            lr: 1e-4,
            weight_decay: 1e-4,
            batch_size: 1,
            iterations: 2000,
            snapshots: Vec::new(),
            lr_step: 1000,
            lr_gamma: 0.5,
            reduction: L1Reduction::Mean,
        }
    }
}

impl MunitHyper {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda_x, self.lambda_c, self.lambda_s];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("loss weights must be finite and nonnegative"));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.lr_gamma > 0.0) {
            return Err(Error::config("lr, weight decay and gamma must be positive"));
        }
        if self.batch_size == 0 || self.lr_step == 0 {
            return Err(Error::config("batch size and lr step must be positive"));
        }
        if self.snapshots.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::config("snapshot schedule must be strictly ascending"));
        }
        if self.snapshots.last().is_some_and(|&s| s > self.iterations) {
            return Err(Error::config("snapshot scheduled after the last iteration"));
        }
        Ok(())
    }
}

/// The four loss components and the weighted total.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MunitLosses<S> {
    pub recon: S,
    pub recon_c: S,
    pub recon_s: S,
    pub gan: S,
    pub total: S,
}

impl<S: Scalar> MunitLosses<S> {
    pub fn weighted_total(recon: S, recon_c: S, recon_s: S, gan: S, hyper: &MunitHyper) -> S {
        gan + S::lit(hyper.lambda_x) * recon + S::lit(hyper.lambda_c) * recon_c + S::lit(hyper.lambda_s) * recon_s
    }

    pub fn is_finite(&self) -> bool {
        [self.recon, self.recon_c, self.recon_s, self.gan, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn to_f64(&self) -> MunitLosses<f64> {
        MunitLosses {
            recon: self.recon.as_f64(),
            recon_c: self.recon_c.as_f64(),
            recon_s: self.recon_s.as_f64(),
            gan: self.gan.as_f64(),
            total: self.total.as_f64(),
        }
    }
}

/// Encoders, decoders and discriminators for two domains.
#[derive(Clone, Debug)]
pub struct TranslationModel<S> {
    config: MunitConfig,
    nets: [Network; 4],
    ranges: [Range<usize>; 8],
    params: Vec<S>,
}

fn softplus<S: Scalar>(z: S) -> S {
    z.max(S::zero()) + (-z.abs()).exp().ln_1p()
}

fn with_style<S: Scalar>(content: &[S], style: &[S], plane: usize) -> Vec<S> {
    let mut v = Vec::with_capacity(content.len() + style.len() * plane);
    v.extend_from_slice(content);
    for &s in style {
        v.extend(std::iter::repeat(s).take(plane));
    }
    v
}

fn split_style_grad<S: Scalar>(g: &[S], content_len: usize, plane: usize) -> (Vec<S>, Vec<S>) {
    let (c, s) = g.split_at(content_len);
    (c.to_vec(), s.chunks(plane).map(|ch| ch.iter().copied().sum()).collect())
}

fn l1<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

impl<S: Scalar> TranslationModel<S> {
    /// Fan-in uniform initialization for every block.
    pub fn init(config: MunitConfig, rng: &mut Rng) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut params = Vec::with_capacity(m.params.len());
        for part in Part::ALL {
            let net = m.net(part.role());
            let mut w = net.init::<S>(rng);
            if part.role() == Role::Decoder {
                // untrained generators emit uniform mid-gray
                let last = net.arch().layers.iter().rposition(|l| matches!(l, Layer::Conv { .. }));
                if let Some(i) = last {
                    w[net.layer_range(i)].fill(S::zero());
                }
            }
            params.extend(w);
        }
        m.params = params;
        Ok(m)
    }

    pub fn zeros(config: MunitConfig) -> Result<Self> {
        let archs = config.architectures()?;
        let nets = archs.map(|a| Network::new(a)).map(|n| n.expect("validated architecture"));
        let mut ranges: [Range<usize>; 8] = Default::default();
        let mut at = 0;
        for (i, part) in Part::ALL.into_iter().enumerate() {
            let n = nets[part.role() as usize].param_count();
            ranges[i] = at..at + n;
            at += n;
        }
        Ok(TranslationModel {
            config,
            nets,
            ranges,
            params: vec![S::zero(); at],
        })
    }

    pub fn from_params(config: MunitConfig, params: Vec<S>) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        if params.len() != m.params.len() {
            return Err(Error::input(format!(
                "munit parameter vector has {} entries, expected {}",
                params.len(),
                m.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numerical("non-finite munit parameter"));
        }
        m.params = params;
        Ok(m)
    }

    pub fn config(&self) -> &MunitConfig {
        &self.config
    }

    pub fn style_dim(&self) -> usize {
        self.config.style_dim
    }

    pub fn content_len(&self) -> usize {
        self.config.content_channels * self.config.image.plane()
    }

    pub fn image_shape(&self) -> Shape {
        self.config.image
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn range(&self, part: Part) -> Range<usize> {
        self.ranges[part as usize].clone()
    }

    /// End of the generator half of the parameter vector.
    pub fn generator_len(&self) -> usize {
        self.ranges[Part::DecoderB as usize].end
    }

    fn net(&self, role: Role) -> &Network {
        &self.nets[role as usize]
    }

    fn w(&self, part: Part) -> &[S] {
        &self.params[self.range(part)]
    }

    fn run(&self, part: Part, x: &[S]) -> Result<Trace<S>> {
        self.net(part.role()).forward(self.w(part), x, Mode::Eval)
    }

    fn back(&self, part: Part, trace: &Trace<S>, up: &[S], grad: &mut [S], need_input: bool) -> Vec<S> {
        let r = self.range(part);
        self.net(part.role())
            .backward(self.w(part), trace, up, &mut grad[r], need_input)
    }

    fn check_image(&self, x: &Image<S>) -> Result<()> {
        if x.shape() != self.config.image {
            return Err(Error::input(format!(
                "image {} does not match translation model input {}",
                x.shape(),
                self.config.image
            )));
        }
        Ok(())
    }

    /// `(content, style)` codes of `x` under the domain's encoders.
    pub fn encode(&self, domain: Domain, x: &Image<S>) -> Result<(Vec<S>, Vec<S>)> {
        self.check_image(x)?;
        let c = self.run(Part::of(domain, Role::Content), x.pixels())?;
        let s = self.run(Part::of(domain, Role::Style), x.pixels())?;
        Ok((c.output().to_vec(), s.output().to_vec()))
    }

    pub fn decode(&self, domain: Domain, content: &[S], style: &[S]) -> Result<Image<S>> {
        if content.len() != self.content_len() || style.len() != self.style_dim() {
            return Err(Error::input(format!(
                "codes of length ({}, {}) do not match ({}, {})",
                content.len(),
                style.len(),
                self.content_len(),
                self.style_dim()
            )));
        }
        let z = with_style(content, style, self.config.image.plane());
        let out = self.run(Part::of(domain, Role::Decoder), &z)?;
        Ok(Image::from_clipped(self.config.image, out.output().to_vec()))
    }

    /// Discriminator probability that `x` is a real image of `domain`.
    pub fn discriminate(&self, domain: Domain, x: &Image<S>) -> Result<S> {
        self.check_image(x)?;
        Ok(sigmoid(self.run(Part::of(domain, Role::Disc), x.pixels())?.output()[0]))
    }

    /// `Dec_target(content(Enc_source(x)), style)`.
    pub fn translate(&self, dir: Direction, x: &Image<S>, style: &[S]) -> Result<Image<S>> {
        self.check_image(x)?;
        if style.len() != self.style_dim() {
            return Err(Error::input("style code length mismatch"));
        }
        let c = self.run(Part::of(dir.source(), Role::Content), x.pixels())?;
        self.decode(dir.target(), c.output(), style)
    }

    /// Vector-Jacobian products of [`Self::translate`] with respect to the
    /// input image and the style code.
    pub fn translate_vjp(&self, dir: Direction, x: &Image<S>, style: &[S], u: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        self.check_image(x)?;
        if style.len() != self.style_dim() || u.len() != x.shape().len() {
            return Err(Error::input("style or upstream length mismatch"));
        }
        let content_part = Part::of(dir.source(), Role::Content);
        let dec_part = Part::of(dir.target(), Role::Decoder);
        let tc = self.run(content_part, x.pixels())?;
        let z = with_style(tc.output(), style, self.config.image.plane());
        let td = self.run(dec_part, &z)?;
        let gz = self.net(dec_part.role()).backward_input(self.w(dec_part), &td, u);
        let (gc, gs) = split_style_grad(&gz, self.content_len(), self.config.image.plane());
        let gx = self.net(content_part.role()).backward_input(self.w(content_part), &tc, &gc);
        Ok((gx, gs))
    }

    /// The four losses on one pair of batches with the given sampled style
    /// codes (`styles_b[i]` pairs with `batch_a[i]`, `styles_a[j]` with
    /// `batch_b[j]`), optionally with the gradient of the total.
    pub fn objective(
        &self,
        batch_a: &[Image<S>],
        batch_b: &[Image<S>],
        styles_a: &[Vec<S>],
        styles_b: &[Vec<S>],
        hyper: &MunitHyper,
        want_grad: bool,
    ) -> Result<(MunitLosses<S>, Option<Vec<S>>)> {
        if batch_a.is_empty() || batch_b.is_empty() {
            return Err(Error::input("munit losses need nonempty batches from both domains"));
        }
        if styles_b.len() != batch_a.len() || styles_a.len() != batch_b.len() {
            return Err(Error::input("one sampled style code is needed per example"));
        }
        let mut grad = want_grad.then(|| vec![S::zero(); self.params.len()]);
        let mut acc = [S::zero(); 4];
        for (domain, batch, styles) in [(Domain::A, batch_a, styles_b), (Domain::B, batch_b, styles_a)] {
            let part = self.domain_terms(domain, batch, styles, hyper, grad.as_deref_mut())?;
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
        let [recon, recon_c, recon_s, gan] = acc;
        let total = MunitLosses::weighted_total(recon, recon_c, recon_s, gan, hyper);
        Ok((
            MunitLosses {
                recon,
                recon_c,
                recon_s,
                gan,
                total,
            },
            grad,
        ))
    }

    /// Terms whose expectation runs over `batch` drawn from `domain`: the
    /// domain's self-reconstruction, the cross-translation code
    /// reconstructions into the other domain, the fake-image GAN term
    /// there, and the real-image GAN term of `domain` itself.
    fn domain_terms(
        &self,
        domain: Domain,
        batch: &[Image<S>],
        styles: &[Vec<S>],
        hyper: &MunitHyper,
        mut grad: Option<&mut [S]>,
    ) -> Result<[S; 4]> {
        let other = match domain {
            Domain::A => Domain::B,
            Domain::B => Domain::A,
        };
        let plane = self.config.image.plane();
        let cl = self.content_len();
        let q = self.style_dim();
        let img_len = self.config.image.len();
        let inv_n = S::one() / S::lit(batch.len() as f64);
        let red = |len: usize| match hyper.reduction {
            L1Reduction::Sum => S::one(),
            L1Reduction::Mean => S::one() / S::lit(len as f64),
        };
        let (rx, rc, rs) = (red(img_len), red(cl), red(q));
        let (lx, lc, ls) = (S::lit(hyper.lambda_x), S::lit(hyper.lambda_c), S::lit(hyper.lambda_s));

        let p_content = Part::of(domain, Role::Content);
        let p_style = Part::of(domain, Role::Style);
        let p_dec = Part::of(domain, Role::Decoder);
        let p_disc = Part::of(domain, Role::Disc);
        let q_content = Part::of(other, Role::Content);
        let q_style = Part::of(other, Role::Style);
        let q_dec = Part::of(other, Role::Decoder);
        let q_disc = Part::of(other, Role::Disc);

        let mut sums = [S::zero(); 4];
        for (x, s_other) in batch.iter().zip(styles) {
            self.check_image(x)?;
            if s_other.len() != q {
                return Err(Error::input("sampled style code length mismatch"));
            }
            let xp = x.pixels();
            let tc = self.run(p_content, xp)?;
            let ts = self.run(p_style, xp)?;
            let c = tc.output();
            let s = ts.output();

            // Self reconstruction.
            let zr = with_style(c, s, plane);
            let tr = self.run(p_dec, &zr)?;
            let recon = tr.output();
            sums[0] += l1(recon, xp) * rx * inv_n;

            // Cross translation and code reconstruction.
            let zt = with_style(c, s_other, plane);
            let tt = self.run(q_dec, &zt)?;
            let fake = tt.output();
            let tcc = self.run(q_content, fake)?;
            let tss = self.run(q_style, fake)?;
            sums[1] += l1(tcc.output(), c) * rc * inv_n;
            sums[2] += l1(tss.output(), s_other) * rs * inv_n;

            // GAN: fake in the other domain, real in this one.
            let tdf = self.run(q_disc, fake)?;
            let zf = tdf.output()[0];
            let tdr = self.run(p_disc, xp)?;
            let zr_real = tdr.output()[0];
            sums[3] += (-softplus(zf) - softplus(-zr_real)) * inv_n;

            let Some(g) = grad.as_deref_mut() else { continue };

            // Real-image discriminator term: d/dz log σ(z) = σ(−z).
            self.back(p_disc, &tdr, &[sigmoid(-zr_real) * inv_n], g, false);

            // Gradient w.r.t. the translated image from the three consumers.
            let up_cc: Vec<S> = tcc
                .output()
                .iter()
                .zip(c)
                .map(|(&a, &b)| lc * rc * inv_n * sign(a - b))
                .collect();
            let up_ss: Vec<S> = tss
                .output()
                .iter()
                .zip(s_other)
                .map(|(&a, &b)| ls * rs * inv_n * sign(a - b))
                .collect();
            let mut g_fake = self.back(q_content, &tcc, &up_cc, g, true);
            let g2 = self.back(q_style, &tss, &up_ss, g, true);
            // d/dz log(1 − σ(z)) = −σ(z).
            let g3 = self.back(q_disc, &tdf, &[-sigmoid(zf) * inv_n], g, true);
            for ((a, b), c3) in g_fake.iter_mut().zip(g2).zip(g3) {
                *a += b + c3;
            }
            let gzt = self.back(q_dec, &tt, &g_fake, g, true);
            let (mut g_c, _) = split_style_grad(&gzt, cl, plane);

            // Self reconstruction.
            let up_r: Vec<S> = recon
                .iter()
                .zip(xp)
                .map(|(&a, &b)| lx * rx * inv_n * sign(a - b))
                .collect();
            let gzr = self.back(p_dec, &tr, &up_r, g, true);
            let (g_c_self, g_s) = split_style_grad(&gzr, cl, plane);
            for ((a, b), d) in g_c.iter_mut().zip(g_c_self).zip(&up_cc) {
                // The content target of the code reconstruction is c itself.
                *a += b - *d;
            }
            self.back(p_content, &tc, &g_c, g, false);
            self.back(p_style, &ts, &g_s, g, false);
        }
        Ok(sums)
    }

    /// The four losses with style codes drawn from the prior.
    pub fn munit_losses(
        &self,
        batch_a: &[Image<S>],
        batch_b: &[Image<S>],
        prior: StylePrior,
        rng: &mut Rng,
        hyper: &MunitHyper,
    ) -> Result<MunitLosses<S>> {
        if prior.dim != self.style_dim() {
            return Err(Error::input("style prior dimension does not match the model"));
        }
        let styles_b: Vec<Vec<S>> = batch_a.iter().map(|_| prior.sample(rng)).collect();
        let styles_a: Vec<Vec<S>> = batch_b.iter().map(|_| prior.sample(rng)).collect();
        Ok(self
            .objective(batch_a, batch_b, &styles_a, &styles_b, hyper, false)?
            .0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::gradcheck::check_coords;
    use crate::rng::stream;
    use rand::Rng as _;

    fn cfg() -> MunitConfig {
        MunitConfig::new(Shape::new(3, 4, 4), 2, 2, 3)
    }

    fn images(n: usize, seed: u64) -> Vec<Image<f64>> {
        let mut r = stream(seed, &[]);
        (0..n)
            .map(|_| Image::new(cfg().image, (0..48).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap())
            .collect()
    }

    fn styles(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = stream(seed, &[]);
        (0..n).map(|_| StylePrior { dim: 2 }.sample(&mut r)).collect()
    }

    #[test]
    fn descriptor_round_trips() {
        let c = cfg();
        assert_eq!(c.to_string(), "munit:3x4x4;content=2;style=2;hidden=3");
        assert_eq!(c.to_string().parse::<MunitConfig>().unwrap(), c);
        assert!("munit:3x4;content=2;style=2;hidden=3".parse::<MunitConfig>().is_err());
        assert!("3x4x4;content=2".parse::<MunitConfig>().is_err());
    }

    #[test]
    fn zero_weights_give_zero_codes_and_gray_images() {
        let m = TranslationModel::<f64>::zeros(cfg()).unwrap();
        let x = &images(1, 1)[0];
        let (c, s) = m.encode(Domain::A, x).unwrap();
        assert_eq!(c.len(), m.content_len());
        assert_eq!(s.len(), 2);
        assert!(c.iter().chain(&s).all(|&v| v == 0.0));
        let y = m.decode(Domain::B, &c, &s).unwrap();
        assert!(y.pixels().iter().all(|&v| v == 0.5));
        assert_eq!(m.discriminate(Domain::A, x).unwrap(), 0.5);
        assert!(matches!(m.decode(Domain::A, &c[1..], &s), Err(Error::Input(_))));
    }

    #[test]
    fn content_encoder_matches_straight_line_oracle() {
        let m = TranslationModel::<f64>::init(cfg(), &mut stream(2, &[])).unwrap();
        let x = &images(1, 3)[0];
        let (c, _) = m.encode(Domain::B, x).unwrap();
        let w = &m.params()[m.range(Part::ContentB)];
        let conv = |input: &[f64], cin: usize, cout: usize, w: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; cout * 16];
            for o in 0..cout {
                for y in 0..4i32 {
                    for xx in 0..4i32 {
                        let mut acc = w[cout * cin * 9 + o];
                        for i in 0..cin {
                            for ky in 0..3i32 {
                                for kx in 0..3i32 {
                                    let (sy, sx) = (y + ky - 1, xx + kx - 1);
                                    if (0..4).contains(&sy) && (0..4).contains(&sx) {
                                        acc += w[((o * cin + i) * 3 + ky as usize) * 3 + kx as usize]
                                            * input[i * 16 + (sy * 4 + sx) as usize];
                                    }
                                }
                            }
                        }
                        out[o * 16 + (y * 4 + xx) as usize] = acc;
                    }
                }
            }
            out
        };
        let n1 = 3 * 3 * 9 + 3;
        let h: Vec<f64> = conv(x.pixels(), 3, 3, &w[..n1])
            .into_iter()
            .map(|v| if v > 0.0 { v } else { 0.2 * v })
            .collect();
        let want = conv(&h, 3, 2, &w[n1..]);
        for (a, b) in c.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decoder_output_in_range_for_random_codes() {
        let m = TranslationModel::<f64>::init(cfg(), &mut stream(5, &[])).unwrap();
        let mut r = stream(6, &[]);
        for _ in 0..50 {
            let c: Vec<f64> = (0..m.content_len()).map(|_| r.gen_range(-5.0..5.0)).collect();
            let s: Vec<f64> = (0..2).map(|_| r.gen_range(-5.0..5.0)).collect();
            let y = m.decode(Domain::A, &c, &s).unwrap();
            assert!(y.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn constant_half_discriminator_gan_value() {
        let m = TranslationModel::<f64>::init(cfg(), &mut stream(7, &[])).unwrap();
        let mut p = m.params().to_vec();
        for part in [Part::DiscA, Part::DiscB] {
            p[m.range(part)].iter_mut().for_each(|v| *v = 0.0);
        }
        let m = TranslationModel::from_params(cfg(), p).unwrap();
        let (l, _) = m
            .objective(&images(3, 1), &images(2, 2), &styles(2, 3), &styles(3, 4), &MunitHyper::default(), false)
            .unwrap();
        assert!((l.gan - 4.0 * 0.5f64.ln()).abs() < 1e-14, "{}", l.gan);
    }

    #[test]
    fn perfect_reconstruction_fixture() {
        // Zero decoders emit σ(0) = ½ everywhere, which reconstructs a
        // constant-½ domain exactly whatever the codes are.
        let m = TranslationModel::<f64>::init(cfg(), &mut stream(8, &[])).unwrap();
        let mut p = m.params().to_vec();
        for part in [Part::DecoderA, Part::DecoderB] {
            p[m.range(part)].iter_mut().for_each(|v| *v = 0.0);
        }
        let m = TranslationModel::from_params(cfg(), p).unwrap();
        let gray = vec![Image::filled(cfg().image, 0.5).unwrap(); 2];
        for reduction in [L1Reduction::Sum, L1Reduction::Mean] {
            let hyper = MunitHyper {
                reduction,
                ..Default::default()
            };
            let (l, _) = m.objective(&gray, &gray, &styles(2, 1), &styles(2, 2), &hyper, false).unwrap();
            assert_eq!(l.recon, 0.0);
            assert!(l.recon_c >= 0.0 && l.recon_s >= 0.0);
        }
    }

    #[test]
    fn weighted_total_arithmetic() {
        let h = MunitHyper::default();
        let t: f64 = MunitLosses::weighted_total(0.2, 0.3, 0.4, -1.0, &h);
        assert!((t - 1.7).abs() < 1e-15);
        let m = TranslationModel::<f64>::init(cfg(), &mut stream(9, &[])).unwrap();
        let (l, _) = m
            .objective(&images(2, 5), &images(2, 6), &styles(2, 7), &styles(2, 8), &h, false)
            .unwrap();
        assert_eq!(l.total, l.gan + 10.0 * l.recon + l.recon_c + l.recon_s);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let m = TranslationModel::<f64>::init(cfg(), &mut stream(10, &[])).unwrap();
        let (a, b) = (images(2, 11), images(2, 12));
        let (sa, sb) = (styles(2, 13), styles(2, 14));
        for reduction in [L1Reduction::Sum, L1Reduction::Mean] {
            let hyper = MunitHyper {
                reduction,
                ..Default::default()
            };
            let (_, g) = m.objective(&a, &b, &sa, &sb, &hyper, true).unwrap();
            let g = g.unwrap();
            let mut r = stream(15, &[]);
            let coords: Vec<usize> = (0..300).map(|_| r.gen_range(0..g.len())).collect();
            // The total is O(100) while some entries are O(1e-5); smaller steps
            // drown in cancellation error.
            let res = check_coords(m.params(), &g, &coords, 1e-4, |p| {
                let mm = TranslationModel::from_params(cfg(), p.to_vec()).unwrap();
                mm.objective(&a, &b, &sa, &sb, &hyper, false).unwrap().0.total
            });
            assert!(res.passes(1e-4), "{reduction:?} {res:?}");
        }
    }

    #[test]
    fn empty_batches_are_rejected() {
        let m = TranslationModel::<f64>::zeros(cfg()).unwrap();
        let e = m.objective(&[], &images(1, 0), &styles(1, 0), &[], &MunitHyper::default(), false);
        assert!(matches!(e, Err(Error::Input(_))));
    }
}
