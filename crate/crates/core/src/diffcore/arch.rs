//! Layer-list architecture descriptors.
//!
//! Descriptors are written `CxHxW:tok,tok,...` using the usual compact
//! notation: `c32-3` is a 3×3 same-padded convolution with 32 kernels, `p2` a
//! 2×2 max-pool, `d0.25` dropout, `flat` a flatten, `fc128` a fully connected
//! layer. Activations are explicit tokens (`relu`, `lrelu`, `tanh`,
//! `sigmoid`) and `up2` is nearest-neighbour 2× upsampling.

use std::fmt;
use std::str::FromStr;

use crate::diffcore::image::Shape;
use crate::error::{Error, Result};

/// Negative slope of the `lrelu` activation.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv { out_channels: usize, kernel: usize },
    MaxPool2,
    Upsample2,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Dropout(f64),
    Flatten,
    Linear { out: usize },
}

impl Layer {
    /// Output shape for a given input shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        Ok(match *self {
            Layer::Conv { out_channels, .. } => Shape::new(out_channels, input.height, input.width),
            Layer::MaxPool2 => {
                if input.height < 2 || input.width < 2 {
                    return Err(Error::config(format!("p2 needs at least 2x2 input, got {input}")));
                }
                Shape::new(input.channels, input.height / 2, input.width / 2)
            }
            Layer::Upsample2 => Shape::new(input.channels, input.height * 2, input.width * 2),
            Layer::Flatten => Shape::flat(input.len()),
            Layer::Linear { out } => Shape::flat(out),
            Layer::Relu | Layer::LeakyRelu | Layer::Tanh | Layer::Sigmoid | Layer::Dropout(_) => input,
        })
    }

    /// Number of trainable parameters for a given input shape.
    pub fn param_count(&self, input: Shape) -> usize {
        match *self {
            Layer::Conv { out_channels, kernel } => {
                out_channels * input.channels * kernel * kernel + out_channels
            }
            Layer::Linear { out } => out * input.len() + out,
            _ => 0,
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Conv { out_channels, kernel } => write!(f, "c{out_channels}-{kernel}"),
            Layer::MaxPool2 => f.write_str("p2"),
            Layer::Upsample2 => f.write_str("up2"),
            Layer::Relu => f.write_str("relu"),
            Layer::LeakyRelu => f.write_str("lrelu"),
            Layer::Tanh => f.write_str("tanh"),
            Layer::Sigmoid => f.write_str("sigmoid"),
            Layer::Dropout(p) => write!(f, "d{p}"),
            Layer::Flatten => f.write_str("flat"),
            Layer::Linear { out } => write!(f, "fc{out}"),
        }
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(tok: &str) -> Result<Self> {
        let bad = || Error::config(format!("unknown layer token `{tok}`"));
        let tok = tok.trim();
        Ok(match tok {
            "p2" => Layer::MaxPool2,
            "up2" => Layer::Upsample2,
            "relu" => Layer::Relu,
            "lrelu" => Layer::LeakyRelu,
            "tanh" => Layer::Tanh,
            "sigmoid" => Layer::Sigmoid,
            "flat" => Layer::Flatten,
            _ => {
                if let Some(rest) = tok.strip_prefix("fc") {
                    let out = rest.trim_start_matches('-').parse().map_err(|_| bad())?;
                    if out == 0 {
                        return Err(bad());
                    }
                    Layer::Linear { out }
                } else if let Some(rest) = tok.strip_prefix('c') {
                    let (o, k) = rest.split_once('-').ok_or_else(bad)?;
                    let out_channels: usize = o.parse().map_err(|_| bad())?;
                    let kernel: usize = k.parse().map_err(|_| bad())?;
                    if out_channels == 0 || kernel % 2 == 0 {
                        return Err(Error::config(format!(
                            "`{tok}`: need positive width and odd kernel"
                        )));
                    }
                    Layer::Conv { out_channels, kernel }
                } else if let Some(rest) = tok.strip_prefix('d') {
                    let p: f64 = rest.parse().map_err(|_| bad())?;
                    if !(0.0..1.0).contains(&p) {
                        return Err(Error::config(format!("dropout rate {p} not in [0, 1)")));
                    }
                    Layer::Dropout(p)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

/// Input shape plus an ordered layer list.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub input: Shape,
    pub layers: Vec<Layer>,
}

impl Architecture {
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self> {
        let arch = Architecture { input, layers };
        arch.shapes()?;
        Ok(arch)
    }

    /// Parses `layers` (comma separated tokens) for a given input shape.
    pub fn from_layers(input: Shape, layers: &str) -> Result<Self> {
        let layers = layers
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Layer>>>()?;
        Architecture::new(input, layers)
    }

    /// Activation shapes: input followed by the output of every layer.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.input.is_empty() {
            return Err(Error::config("architecture input shape is empty"));
        }
        let mut shapes = vec![self.input];
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output(&self) -> Shape {
        *self.shapes().expect("validated architecture").last().unwrap()
    }

    /// Desk-scale reduction of `c32-3, c64-3, p2, c128-3, p2, d0.25, flat,
    /// fc128, d0.5, fc10` with ReLU after every conv and hidden fc layer.
    /// `widths` = (conv1, conv2, conv3, fc hidden).
    pub fn reference_cnn(input: Shape, widths: [usize; 4], classes: usize) -> Result<Self> {
        let [c1, c2, c3, h] = widths;
        Architecture::from_layers(
            input,
            &format!(
                "c{c1}-3,relu,c{c2}-3,relu,p2,c{c3}-3,relu,p2,d0.25,flat,fc{h},relu,d0.5,fc{classes}"
            ),
        )
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.input)?;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{layer}")?;
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, layers) = s
            .split_once(':')
            .ok_or_else(|| Error::config(format!("architecture `{s}` lacks `CxHxW:` prefix")))?;
        let dims = head
            .trim()
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::config(format!("bad input shape `{head}`")))?;
        let [c, h, w] = dims[..] else {
            return Err(Error::config(format!("bad input shape `{head}`")));
        };
        Architecture::from_layers(Shape::new(c, h, w), layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trips() {
        let arch = Architecture::reference_cnn(Shape::new(3, 16, 16), [8, 8, 16, 32], 10).unwrap();
        let text = arch.to_string();
        assert_eq!(
            text,
            "3x16x16:c8-3,relu,c8-3,relu,p2,c16-3,relu,p2,d0.25,flat,fc32,relu,d0.5,fc10"
        );
        assert_eq!(text.parse::<Architecture>().unwrap(), arch);
        assert_eq!(arch.output(), Shape::flat(10));
    }

    #[test]
    fn paper_notation_parses_with_spaces() {
        let arch = Architecture::from_layers(
            Shape::new(3, 32, 32),
            "c32-3, c64-3, p2, c128-3, p2, d0.25, flat, fc128, d0.5, fc10",
        )
        .unwrap();
        assert_eq!(arch.layers.len(), 10);
        let shapes = arch.shapes().unwrap();
        assert_eq!(shapes[5], Shape::new(128, 8, 8));
    }

    #[test]
    fn rejects_bad_tokens() {
        for bad in ["c8-2", "q3", "d1.5", "fc0", "c0-3"] {
            assert!(bad.parse::<Layer>().is_err(), "{bad}");
        }
        assert!("3x1x1:p2".parse::<Architecture>().is_err());
        assert!("3x4:fc2".parse::<Architecture>().is_err());
    }
}
