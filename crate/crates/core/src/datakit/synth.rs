//! Seeded synthetic datasets for desk-scale experiments: seven-segment
//! digits and two-domain tiny shapes.

use rand::Rng as _;

use crate::datakit::dataset::Dataset;
use crate::diffcore::{Image, Shape};
use crate::error::Result;
use crate::rng::{purpose, stream};
use crate::scalar::{clamp_unit, Scalar};

pub const DIGIT_SHAPE: Shape = Shape::new(3, 16, 16);

/// Rounds to byte levels so generated data survives an IDX round trip.
fn quantized<S: Scalar>(shape: Shape, px: &[f64]) -> Result<Image<S>> {
    let bytes: Vec<u8> = px.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    Image::from_bytes(shape, &bytes)
}

// segments a..g as endpoints in a unit box (x right, y down)
const SEGMENTS: [((f64, f64), (f64, f64)); 7] = [
    ((0.0, 0.0), (1.0, 0.0)),
    ((1.0, 0.0), (1.0, 0.5)),
    ((1.0, 0.5), (1.0, 1.0)),
    ((0.0, 1.0), (1.0, 1.0)),
    ((0.0, 0.5), (0.0, 1.0)),
    ((0.0, 0.0), (0.0, 0.5)),
    ((0.0, 0.5), (1.0, 0.5)),
];

const DIGIT_SEGMENTS: [u8; 10] = [
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110, 0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
];

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Stroke coverage in [0,1] per pixel, 2×2 supersampled.
fn render_digit(digit: usize, rng: &mut crate::rng::Rng) -> Vec<f64> {
    let (h, w) = (DIGIT_SHAPE.height, DIGIT_SHAPE.width);
    let bw = rng.gen_range(6.0..8.5);
    let bh = rng.gen_range(9.5..12.0);
    let x0 = (w as f64 - bw) / 2.0 + rng.gen_range(-1.5..1.5);
    let y0 = (h as f64 - bh) / 2.0 + rng.gen_range(-1.0..1.0);
    let shear = rng.gen_range(-0.2..0.2);
    let thick = rng.gen_range(1.3..2.2);
    let on = DIGIT_SEGMENTS[digit];
    let segs: Vec<_> = (0..7)
        .filter(|s| on >> s & 1 == 1)
        .map(|s| {
            let map = |(u, v): (f64, f64)| (x0 + u * bw + shear * (0.5 - v) * bh, y0 + v * bh);
            (map(SEGMENTS[s].0), map(SEGMENTS[s].1))
        })
        .collect();
    let mut cov = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut hits = 0;
            for (sy, sx) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                let p = (x as f64 + sx, y as f64 + sy);
                if segs.iter().any(|&(a, b)| dist_to_segment(p, a, b) <= thick / 2.0) {
                    hits += 1;
                }
            }
            cov[y * w + x] = f64::from(hits) / 4.0;
        }
    }
    cov
}

/// `n` gray seven-segment digits on black, labels cycling 0..9.
/// Strokes vary in size, position, slant, thickness and intensity.
pub fn seven_segment_digits<S: Scalar>(n: usize, seed: u64) -> Result<Dataset<S>> {
    let plane = DIGIT_SHAPE.plane();
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(seed, &[purpose::DATA, i as u64]);
        let digit = i % 10;
        let cov = render_digit(digit, &mut rng);
        let level = rng.gen_range(0.7..1.0);
        let px: Vec<f64> = (0..3).flat_map(|_| cov.iter().map(|&c| level * c)).collect();
        debug_assert_eq!(px.len(), 3 * plane);
        images.push(quantized(DIGIT_SHAPE, &px)?);
        labels.push(digit);
    }
    Dataset::new(images, Some(labels), format!("seven-segment digits n={n} seed={seed}"), "digits")
}

/// Dim, low-contrast digits: gray background `b` and strokes `b + c`
/// with `b ∈ [0.08, 0.2]`, `c ∈ [0.12, 0.25]`.
pub fn dim_digits<S: Scalar>(n: usize, seed: u64) -> Result<Dataset<S>> {
    let base = seven_segment_digits::<f64>(n, seed)?;
    let out = base.map_images(|i, x| {
        let mut rng = stream(seed, &[purpose::DATA, i as u64, 1]);
        let b = rng.gen_range(0.08..0.2);
        let c = rng.gen_range(0.12..0.25);
        // undo the stroke level so contrast is set by c alone
        let peak = x.pixels().iter().copied().fold(0.0, f64::max).max(1e-9);
        let px: Vec<f64> = x.pixels().iter().map(|&p| clamp_unit(b + c * p / peak)).collect();
        quantized(x.shape(), &px)
    })?;
    Ok(out
        .with_domain("dim-digits")
        .with_provenance(format!("dim seven-segment digits n={n} seed={seed}"))
        .cast())
}

pub const SHAPE_SHAPE: Shape = Shape::new(3, 8, 8);
pub const SHAPE_CLASSES: usize = 4;

/// Which tiny-shape domain to draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeDomain {
    /// Bright, slightly tinted shapes on dark backgrounds.
    A,
    /// Dark shapes on bright warm-colored backgrounds.
    B,
}

fn shape_mask(class: usize, rng: &mut crate::rng::Rng) -> Vec<bool> {
    let n = SHAPE_SHAPE.height;
    let ox = rng.gen_range(-1i32..=1);
    let oy = rng.gen_range(-1i32..=1);
    let mut m = vec![false; n * n];
    for y in 0..n as i32 {
        for x in 0..n as i32 {
            let (u, v) = (x - ox, y - oy);
            let inside = match class {
                // horizontal bar
                0 => (3..=4).contains(&v) && (1..=6).contains(&u),
                // vertical bar
                1 => (3..=4).contains(&u) && (1..=6).contains(&v),
                // filled square
                2 => (2..=5).contains(&u) && (2..=5).contains(&v),
                // diagonal
                _ => (1..=6).contains(&u) && (0..=1).contains(&(u - v)),
            };
            m[(y as usize) * n + x as usize] = inside;
        }
    }
    m
}

/// `n` tiny two-color shapes of the given domain, labels cycling 0..3.
pub fn shape_domain<S: Scalar>(domain: ShapeDomain, n: usize, seed: u64) -> Result<Dataset<S>> {
    let tag = match domain {
        ShapeDomain::A => 0,
        ShapeDomain::B => 1,
    };
    let plane = SHAPE_SHAPE.plane();
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream(seed, &[purpose::DATA, tag, i as u64]);
        let class = i % SHAPE_CLASSES;
        let mask = shape_mask(class, &mut rng);
        let (fg, bg): ([f64; 3], [f64; 3]) = match domain {
            ShapeDomain::A => {
                let v = rng.gen_range(0.75..1.0);
                let fg = [v, v * rng.gen_range(0.85..1.0), v * rng.gen_range(0.85..1.0)];
                let g = rng.gen_range(0.0..0.2);
                (fg, [g, g, g + rng.gen_range(0.0..0.1)])
            }
            ShapeDomain::B => {
                let v = rng.gen_range(0.0..0.25);
                let bg = [rng.gen_range(0.8..1.0), rng.gen_range(0.4..0.9), rng.gen_range(0.0..0.3)];
                ([v, v, v], bg)
            }
        };
        let mut px = vec![0.0; 3 * plane];
        for c in 0..3 {
            for p in 0..plane {
                px[c * plane + p] = if mask[p] { fg[c] } else { bg[c] };
            }
        }
        images.push(quantized(SHAPE_SHAPE, &px)?);
        labels.push(class);
    }
    let name = match domain {
        ShapeDomain::A => "shapes-a",
        ShapeDomain::B => "shapes-b",
    };
    Dataset::new(images, Some(labels), format!("{name} n={n} seed={seed}"), name)
}
