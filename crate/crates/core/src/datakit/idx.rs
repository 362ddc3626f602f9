//! IDX files (big-endian, unsigned-byte payload).
//!
//! Images: magic `0x00000803` with dims `n, rows, cols` (grayscale,
//! replicated to three channels on load) or `0x00000804` with dims
//! `n, channels, rows, cols` (planar color). Labels: `0x00000801`, dim `n`.

use std::path::Path;

use crate::datakit::dataset::Dataset;
use crate::diffcore::{Image, Shape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IMAGES_GRAY: u32 = 0x0000_0803;
pub const IMAGES_COLOR: u32 = 0x0000_0804;
pub const LABELS: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn u32(&mut self, field: &str) -> Result<u32> {
        let end = self.pos + 4;
        if end > self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!(
                    "{}: truncated header reading {field}: need {end} bytes, file has {}",
                    self.what,
                    self.bytes.len()
                ),
            ));
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn payload(&mut self, len: usize) -> Result<&'a [u8]> {
        let have = self.bytes.len() - self.pos;
        if have < len {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!(
                    "{}: truncated payload: expected {len} bytes after the header, found {have} ({} short)",
                    self.what,
                    len - have
                ),
            ));
        }
        if have > len {
            return Err(Error::format(
                (self.pos + len) as u64,
                format!("{}: {} trailing bytes after the payload", self.what, have - len),
            ));
        }
        let out = &self.bytes[self.pos..];
        self.pos += len;
        Ok(out)
    }
}

/// Decodes an image file into 3-channel (or native color) byte images.
pub fn decode_images<S: Scalar>(bytes: &[u8]) -> Result<Vec<Image<S>>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "IDX images",
    };
    let magic = r.u32("magic")?;
    let (n, channels, rows, cols) = match magic {
        IMAGES_GRAY => (r.u32("count")?, 1, r.u32("rows")?, r.u32("columns")?),
        IMAGES_COLOR => (r.u32("count")?, r.u32("channels")?, r.u32("rows")?, r.u32("columns")?),
        other => {
            return Err(Error::format(
                0,
                format!("IDX images: bad magic 0x{other:08x}, expected 0x{IMAGES_GRAY:08x} or 0x{IMAGES_COLOR:08x}"),
            ))
        }
    };
    if rows == 0 || cols == 0 || channels == 0 {
        return Err(Error::format(8, "IDX images: zero image dimension"));
    }
    let per = channels as usize * rows as usize * cols as usize;
    let payload = r.payload(n as usize * per)?;
    let shape = Shape::new(channels as usize, rows as usize, cols as usize);
    payload
        .chunks(per)
        .map(|chunk| {
            let im = Image::from_bytes(shape, chunk)?;
            if channels == 1 {
                im.replicate_channels(3)
            } else {
                Ok(im)
            }
        })
        .collect()
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        what: "IDX labels",
    };
    let magic = r.u32("magic")?;
    if magic != LABELS {
        return Err(Error::format(
            0,
            format!("IDX labels: bad magic 0x{magic:08x}, expected 0x{LABELS:08x}"),
        ));
    }
    let n = r.u32("count")? as usize;
    Ok(r.payload(n)?.iter().map(|&b| usize::from(b)).collect())
}

fn is_gray<S: Scalar>(im: &Image<S>) -> bool {
    let s = im.shape();
    s.channels == 3 && im.channel(1) == im.channel(0) && im.channel(2) == im.channel(0)
}

/// Encodes images as bytes; sets whose three channels are identical are
/// written as grayscale, everything else as planar color.
pub fn encode_images<S: Scalar>(images: &[Image<S>]) -> Result<Vec<u8>> {
    let shape = images.first().map(Image::shape).unwrap_or(Shape::new(1, 1, 1));
    if images.iter().any(|im| im.shape() != shape) {
        return Err(Error::input("IDX needs images of one shape"));
    }
    let gray = !images.is_empty() && images.iter().all(is_gray);
    let mut out = Vec::new();
    if gray {
        out.extend(IMAGES_GRAY.to_be_bytes());
    } else {
        out.extend(IMAGES_COLOR.to_be_bytes());
    }
    out.extend((images.len() as u32).to_be_bytes());
    if !gray {
        out.extend((shape.channels as u32).to_be_bytes());
    }
    out.extend((shape.height as u32).to_be_bytes());
    out.extend((shape.width as u32).to_be_bytes());
    for im in images {
        let b = im.to_bytes();
        if gray {
            out.extend(&b[..shape.plane()]);
        } else {
            out.extend(b);
        }
    }
    Ok(out)
}

pub fn encode_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(LABELS.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::input(format!("label {l} does not fit in a byte")))?);
    }
    Ok(out)
}

/// Loads an image file and, optionally, its label file.
pub fn load_idx<S: Scalar>(images: &Path, labels: Option<&Path>) -> Result<Dataset<S>> {
    let ims = decode_images(&std::fs::read(images)?)?;
    let ls = match labels {
        Some(p) => {
            let l = decode_labels(&std::fs::read(p)?)?;
            if l.len() != ims.len() {
                return Err(Error::format(
                    4,
                    format!("label file has {} entries for {} images", l.len(), ims.len()),
                ));
            }
            Some(l)
        }
        None => None,
    };
    let stem = images
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(ims, ls, format!("idx:{}", images.display()), stem)
}

pub fn save_idx<S: Scalar>(data: &Dataset<S>, images: &Path, labels: Option<&Path>) -> Result<()> {
    std::fs::write(images, encode_images(data.images())?)?;
    if let Some(p) = labels {
        std::fs::write(p, encode_labels(data.labels()?)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_fixture(n: u32, rows: u32, cols: u32) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_GRAY, n, rows, cols] {
            b.extend(v.to_be_bytes());
        }
        b.extend((0..n * rows * cols).map(|i| (i % 256) as u8));
        b
    }

    #[test]
    fn four_image_fixture_has_three_channel_shapes() {
        let ims = decode_images::<f64>(&gray_fixture(4, 28, 28)).unwrap();
        assert_eq!(ims.len(), 4);
        assert!(ims.iter().all(|im| im.shape() == Shape::new(3, 28, 28)));
        assert_eq!(ims[0].get(2, 9, 3), 255.0 / 255.0);
        assert_eq!(ims[0].get(0, 9, 3), 1.0);
    }

    #[test]
    fn truncation_and_magic_errors_are_positional() {
        let mut b = gray_fixture(2, 3, 3);
        b.truncate(b.len() - 5);
        let e = decode_images::<f32>(&b).unwrap_err().to_string();
        assert!(e.contains("5 short") && e.contains("byte 29"), "{e}");
        let mut m = gray_fixture(1, 2, 2);
        m[3] = 0x02;
        let e = decode_images::<f32>(&m).unwrap_err().to_string();
        assert!(e.contains("byte 0") && e.contains("0x00000802"), "{e}");
        let e = decode_images::<f32>(&m[..6]).unwrap_err().to_string();
        assert!(e.contains("at byte 0") || e.contains("at byte 4"), "{e}");
    }

    #[test]
    fn labels_round_trip() {
        let l = vec![0, 3, 9, 255];
        assert_eq!(decode_labels(&encode_labels(&l).unwrap()).unwrap(), l);
        assert!(encode_labels(&[256]).is_err());
    }

    #[test]
    fn color_images_round_trip() {
        let s = Shape::new(3, 2, 2);
        let im = Image::<f64>::from_bytes(s, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 255]).unwrap();
        let bytes = encode_images(std::slice::from_ref(&im)).unwrap();
        assert_eq!(&bytes[..4], &IMAGES_COLOR.to_be_bytes());
        assert_eq!(decode_images::<f64>(&bytes).unwrap(), vec![im]);
    }
}
