//! Binary weight container.
//!
//! All integers little-endian, no alignment padding:
//!
//! ```text
//! "BWEF"                     4 bytes
//! version                    u32
//! config                     8 x u32: n_mels dim intermediate n_blocks
//!                                     n_fft hop sample_rate dw_kernel
//! tensors, in tensor_layout() order:
//!   name length              u16
//!   name                     UTF-8
//!   rank                     u8
//!   dims                     rank x u32
//!   values                   f32, row-major
//! crc32 (IEEE) of all preceding bytes   u32
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{tensor_layout, VocoderConfig, VocoderModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BWEF";
pub const FORMAT_VERSION: u32 = 1;

/// Serialises `model` into `out`.
pub fn write_weights<W: Write>(model: &VocoderModel, out: W) -> Result<()> {
    let mut out = CrcWriter::new(out);
    let cfg = &model.config;
    out.put(MAGIC)?;
    out.put(&FORMAT_VERSION.to_le_bytes())?;
    for v in [
        cfg.n_mels,
        cfg.dim,
        cfg.intermediate,
        cfg.n_blocks,
        cfg.n_fft,
        cfg.hop,
        cfg.sample_rate as usize,
        cfg.dw_kernel,
    ] {
        out.put(&u32_field(v, "config")?.to_le_bytes())?;
    }
    for ((name, shape), data) in tensor_layout(cfg).iter().zip(model.tensors()) {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Format(format!("tensor name `{name}` too long")))?;
        out.put(&name_len.to_le_bytes())?;
        out.put(name.as_bytes())?;
        out.put(&[shape.len() as u8])?;
        for &d in shape {
            out.put(&u32_field(d, name)?.to_le_bytes())?;
        }
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.put(&bytes)?;
    }
    let crc = out.hasher.clone().finalize();
    out.inner.write_all(&crc.to_le_bytes())?;
    out.inner.flush()?;
    Ok(())
}

pub fn save_weights(model: &VocoderModel, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    write_weights(model, BufWriter::new(file))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<VocoderModel> {
    read_weights(&fs::read(path)?)
}

/// Parses a weight file held in memory.
///
/// Checks run in file order (magic, version, config, each tensor header and
/// payload), then the checksum, then value finiteness.
pub fn read_weights(bytes: &[u8]) -> Result<VocoderModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, not a BWEF weight file".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let mut c = [0usize; 8];
    for v in c.iter_mut() {
        *v = r.u32("config")? as usize;
    }
    let config = VocoderConfig {
        n_mels: c[0],
        dim: c[1],
        intermediate: c[2],
        n_blocks: c[3],
        n_fft: c[4],
        hop: c[5],
        sample_rate: c[6] as u32,
        dw_kernel: c[7],
    };
    config.validate()?;
    let layout = tensor_layout(&config);
    let mut tensors = Vec::with_capacity(layout.len());
    for (name, shape) in &layout {
        let name_len = r.u16(name)? as usize;
        let found = r.take(name_len, name)?;
        if found != name.as_bytes() {
            return Err(Error::Format(format!(
                "expected tensor `{name}`, found `{}`",
                String::from_utf8_lossy(found)
            )));
        }
        let rank = r.take(1, name)?[0] as usize;
        let dims = (0..rank)
            .map(|_| r.u32(name).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if &dims != shape {
            return Err(Error::Shape {
                tensor: name.clone(),
                expected: shape.clone(),
                found: dims,
            });
        }
        let count: usize = dims.iter().product();
        let raw = r.take(count * 4, name)?;
        tensors.push(
            raw.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect::<Vec<f32>>(),
        );
    }
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checksum",
            bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let model = VocoderModel::from_tensors(config, tensors)?;
    debug_assert_eq!(model.parameter_count(), config.parameter_count());
    Ok(model)
}

fn u32_field(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} value {v} exceeds u32")))
}

struct CrcWriter<W> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> CrcWriter<W> {
    fn new(inner: W) -> Self {
        Self {
            inner,
            hasher: crc32fast::Hasher::new(),
        }
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "needed {n} bytes for {what} at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
