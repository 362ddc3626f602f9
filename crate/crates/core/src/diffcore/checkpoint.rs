//! Little-endian binary checkpoints.
//!
//! Layout: magic `MBRT`, format version (u32), descriptor length (u32) and
//! UTF-8 descriptor, parameter count (u64), f32 parameters, section count
//! (u32) followed by `(name length u32, name, start u64, len u64)` entries,
//! and a trailing CRC32 of every preceding byte. Plain classifier
//! checkpoints carry zero sections.

use std::fs;
use std::path::Path;

use crate::diffcore::arch::Architecture;
use crate::diffcore::classifier::Classifier;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"MBRT";
pub const VERSION: u32 = 1;

/// A named sub-range of the parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    pub start: u64,
    pub len: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub descriptor: String,
    pub params: Vec<f32>,
    pub sections: Vec<Section>,
}

impl Checkpoint {
    pub fn new<S: Scalar>(descriptor: impl Into<String>, params: &[S]) -> Self {
        Checkpoint {
            descriptor: descriptor.into(),
            params: params.iter().map(|p| p.as_f64() as f32).collect(),
            sections: Vec::new(),
        }
    }

    pub fn params_as<S: Scalar>(&self) -> Vec<S> {
        self.params.iter().map(|&p| S::lit(f64::from(p))).collect()
    }

    pub fn section(&self, name: &str) -> Option<&[f32]> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.params[s.start as usize..(s.start + s.len) as usize])
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.descriptor.len() + 4 * self.params.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.descriptor.len() as u32).to_le_bytes());
        out.extend_from_slice(self.descriptor.as_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for s in &self.sections {
            out.extend_from_slice(&(s.name.len() as u32).to_le_bytes());
            out.extend_from_slice(s.name.as_bytes());
            out.extend_from_slice(&s.start.to_le_bytes());
            out.extend_from_slice(&s.len.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, format!("bad magic {magic:02x?}, expected \"MBRT\"")));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
        }
        let dlen = r.u32("descriptor length")? as usize;
        let dpos = r.pos as u64;
        let descriptor = String::from_utf8(r.take(dlen, "descriptor")?.to_vec())
            .map_err(|_| Error::format(dpos, "descriptor is not UTF-8"))?;
        let count = r.u64("parameter count")?;
        let need = count
            .checked_mul(4)
            .filter(|&n| n <= (bytes.len() - r.pos) as u64)
            .ok_or_else(|| {
                Error::format(
                    r.pos as u64,
                    format!("{count} parameters do not fit in {} remaining bytes", bytes.len() - r.pos),
                )
            })?;
        let payload = r.take(need as usize, "parameters")?;
        let params = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect::<Vec<_>>();
        let nsec = r.u32("section count")?;
        let mut sections = Vec::new();
        for _ in 0..nsec {
            let nlen = r.u32("section name length")? as usize;
            let npos = r.pos as u64;
            let name = String::from_utf8(r.take(nlen, "section name")?.to_vec())
                .map_err(|_| Error::format(npos, "section name is not UTF-8"))?;
            let spos = r.pos as u64;
            let start = r.u64("section start")?;
            let len = r.u64("section length")?;
            if start.checked_add(len).is_none_or(|e| e > count) {
                return Err(Error::format(spos, format!("section `{name}` exceeds parameter count")));
            }
            sections.push(Section { name, start, len });
        }
        let body_end = r.pos;
        let crc = r.u32("crc32")?;
        if r.pos != bytes.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after crc32"));
        }
        let actual = crc32fast::hash(&bytes[..body_end]);
        if crc != actual {
            return Err(Error::format(
                body_end as u64,
                format!("crc32 mismatch: stored {crc:08x}, computed {actual:08x}"),
            ));
        }
        Ok(Checkpoint {
            descriptor,
            params,
            sections,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::decode(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format(
                self.pos as u64,
                format!(
                    "truncated {what}: need {n} bytes, {} available",
                    self.bytes.len() - self.pos
                ),
            ));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

pub fn save_classifier<S: Scalar>(c: &Classifier<S>, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::new(c.arch().to_string(), c.weights()).save(path)
}

pub fn load_classifier<S: Scalar>(path: impl AsRef<Path>) -> Result<Classifier<S>> {
    let ck = Checkpoint::load(path)?;
    let arch: Architecture = ck.descriptor.parse()?;
    Classifier::from_weights(arch, ck.params_as())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new("1x2x2:fc3", &[0.5f64, -1.25, 3.0, 0.0]);
        ck.sections.push(Section {
            name: "head".into(),
            start: 1,
            len: 2,
        });
        ck
    }

    #[test]
    fn encode_decode_round_trip() {
        let ck = sample();
        let bytes = ck.encode();
        assert_eq!(&bytes[..4], b"MBRT");
        assert_eq!(Checkpoint::decode(&bytes).unwrap(), ck);
        assert_eq!(ck.section("head").unwrap(), &[-1.25, 3.0]);
    }

    #[test]
    fn corruption_is_detected_with_offsets() {
        let bytes = sample().encode();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[30] ^= 0xff;
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Format { .. })));
        let err = Checkpoint::decode(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }
}
