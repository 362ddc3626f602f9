//! Brightness and contrast on the 0–255 scale, over all channels jointly.
//!
//! Images whose entries are exact byte levels are measured with integer
//! arithmetic (exact and order-independent); other images use a
//! sequential f64 sum in storage order.

use std::fmt;
use std::str::FromStr;

use crate::diffcore::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn byte_levels<S: Scalar>(x: &Image<S>) -> Option<Vec<u8>> {
    let bytes = x.to_bytes();
    let scale = S::lit(255.0);
    x.pixels()
        .iter()
        .zip(&bytes)
        .all(|(&p, &b)| S::lit(f64::from(b)) / scale == p)
        .then_some(bytes)
}

/// Mean entry value.
pub fn brightness_metric<S: Scalar>(x: &Image<S>) -> f64 {
    let n = x.pixels().len() as f64;
    match byte_levels(x) {
        Some(b) => b.iter().map(|&v| u64::from(v)).sum::<u64>() as f64 / n,
        None => {
            let mut s = 0.0f64;
            for &p in x.pixels() {
                s += p.as_f64() * 255.0;
            }
            s / n
        }
    }
}

/// Largest minus smallest entry.
pub fn contrast_metric<S: Scalar>(x: &Image<S>) -> f64 {
    match byte_levels(x) {
        Some(b) => {
            let hi = *b.iter().max().expect("nonempty image");
            let lo = *b.iter().min().expect("nonempty image");
            f64::from(hi - lo)
        }
        None => {
            let (lo, hi) = x
                .pixels()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                    let v = p.as_f64();
                    (lo.min(v), hi.max(v))
                });
            (hi - lo) * 255.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Brightness,
    Contrast,
}

impl Metric {
    pub fn eval<S: Scalar>(self, x: &Image<S>) -> f64 {
        match self {
            Metric::Brightness => brightness_metric(x),
            Metric::Contrast => contrast_metric(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Brightness => "brightness",
            Metric::Contrast => "contrast",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brightness" => Ok(Metric::Brightness),
            "contrast" => Ok(Metric::Contrast),
            _ => Err(Error::config(format!("unknown metric `{s}` (brightness|contrast)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Shape;

    #[test]
    fn constant_and_half_images() {
        let s = Shape::new(3, 4, 4);
        let c = Image::<f64>::from_bytes(s, &[60; 48]).unwrap();
        assert_eq!(brightness_metric(&c), 60.0);
        assert_eq!(contrast_metric(&c), 0.0);
        let mut b = vec![0u8; 48];
        b[24..].fill(255);
        let h = Image::<f32>::from_bytes(s, &b).unwrap();
        assert_eq!(brightness_metric(&h), 127.5);
        assert_eq!(contrast_metric(&h), 255.0);
    }

    #[test]
    fn min_max_difference() {
        let s = Shape::new(3, 1, 2);
        let im = Image::<f64>::from_bytes(s, &[10, 50, 200, 100, 30, 40]).unwrap();
        assert_eq!(contrast_metric(&im), 190.0);
    }

    #[test]
    fn off_grid_images_use_float_path() {
        let s = Shape::new(1, 1, 2);
        let im = Image::new(s, vec![0.1f64, 0.3]).unwrap();
        assert!((brightness_metric(&im) - 51.0).abs() < 1e-12);
        assert!((contrast_metric(&im) - 51.0).abs() < 1e-12);
    }
}
