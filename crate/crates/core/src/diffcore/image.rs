use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Channel/height/width of an activation or image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub const fn flat(len: usize) -> Self {
        Shape::new(len, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A C×H×W image with pixels in the canonical range [0, 1], stored planar
/// (channel-major).
#[derive(Clone, Debug, PartialEq)]
pub struct Image<S> {
    shape: Shape,
    pixels: Vec<S>,
}

impl<S: Scalar> Image<S> {
    /// Builds an image, rejecting empty shapes, length mismatches and
    /// out-of-range or non-finite pixels.
    pub fn new(shape: Shape, pixels: Vec<S>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::input(format!("image shape {shape} is empty")));
        }
        if pixels.len() != shape.len() {
            return Err(Error::input(format!(
                "image shape {shape} needs {} pixels, got {}",
                shape.len(),
                pixels.len()
            )));
        }
        if let Some(i) = pixels
            .iter()
            .position(|&p| !(p >= S::zero() && p <= S::one()))
        {
            return Err(Error::input(format!(
                "pixel {i} = {} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Image { shape, pixels })
    }

    /// Constructor for callers that guarantee the range invariant (clipped outputs).
    pub(crate) fn from_clipped(shape: Shape, pixels: Vec<S>) -> Self {
        debug_assert_eq!(pixels.len(), shape.len());
        debug_assert!(pixels.iter().all(|&p| p >= S::zero() && p <= S::one()));
        Image { shape, pixels }
    }

    pub fn filled(shape: Shape, value: S) -> Result<Self> {
        Image::new(shape, vec![value; shape.len()])
    }

    /// Rescales 0–255 bytes into [0, 1].
    pub fn from_bytes(shape: Shape, bytes: &[u8]) -> Result<Self> {
        let scale = S::lit(255.0);
        Image::new(
            shape,
            bytes.iter().map(|&b| S::lit(f64::from(b)) / scale).collect(),
        )
    }

    /// Quantizes to 0–255 bytes (round half away from zero).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn pixels(&self) -> &[S] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<S> {
        self.pixels
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> S {
        self.pixels[(c * self.shape.height + y) * self.shape.width + x]
    }

    pub fn channel(&self, c: usize) -> &[S] {
        let n = self.shape.plane();
        &self.pixels[c * n..(c + 1) * n]
    }

    /// Repeats a single-channel image into `channels` identical planes.
    pub fn replicate_channels(&self, channels: usize) -> Result<Self> {
        if self.shape.channels != 1 {
            return Err(Error::input("only single-channel images can be replicated"));
        }
        let mut pixels = Vec::with_capacity(self.pixels.len() * channels);
        for _ in 0..channels {
            pixels.extend_from_slice(&self.pixels);
        }
        Ok(Image {
            shape: Shape::new(channels, self.shape.height, self.shape.width),
            pixels,
        })
    }

    /// Converts between scalar widths.
    pub fn cast<T: Scalar>(&self) -> Image<T> {
        Image {
            shape: self.shape,
            pixels: self.pixels.iter().map(|p| T::lit(p.as_f64())).collect(),
        }
    }

    pub fn mean(&self) -> S {
        let n = S::lit(self.pixels.len() as f64);
        self.pixels.iter().copied().sum::<S>() / n
    }
}

/// A minibatch of same-shaped images with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<S> {
    pub images: Vec<Image<S>>,
    pub labels: Vec<usize>,
}

impl<S: Scalar> Batch<S> {
    pub fn new(images: Vec<Image<S>>, labels: Vec<usize>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::input("batch is empty"));
        }
        if images.len() != labels.len() {
            return Err(Error::input(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let shape = images[0].shape();
        if images.iter().any(|im| im.shape() != shape) {
            return Err(Error::input("batch images differ in shape"));
        }
        Ok(Batch { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        let shape = Shape::new(1, 1, 2);
        assert!(Image::new(shape, vec![0.5f64, 1.2]).is_err());
        assert!(Image::new(shape, vec![0.5f64, f64::NAN]).is_err());
        assert!(Image::new(shape, vec![0.5f64]).is_err());
        assert!(Image::new(shape, vec![0.0f64, 1.0]).is_ok());
    }

    #[test]
    fn byte_endpoints_rescale_exactly() {
        let im = Image::<f64>::from_bytes(Shape::new(1, 1, 3), &[0, 128, 255]).unwrap();
        assert_eq!(im.pixels()[0], 0.0);
        assert_eq!(im.pixels()[2], 1.0);
        assert_eq!(im.to_bytes(), vec![0, 128, 255]);
    }

    #[test]
    fn batch_validates_labels_and_shapes() {
        let a = Image::filled(Shape::new(1, 2, 2), 0.1f64).unwrap();
        let b = Image::filled(Shape::new(1, 3, 2), 0.1f64).unwrap();
        assert!(Batch::new(vec![a.clone()], vec![]).is_err());
        assert!(Batch::new(vec![a.clone(), b], vec![0, 1]).is_err());
        assert!(Batch::<f64>::new(vec![], vec![]).is_err());
        assert!(Batch::new(vec![a], vec![3]).is_ok());
    }
}
