//! Binary codec checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `SEMLCKPT` | 8 bytes |
//! | format version (1) | u32 |
//! | preset (0 small, 1 base) | u8 |
//! | quantized flag | u8 |
//! | patch length, feature length, constellation bits, token count | 4 x u32 |
//! | constellation clip, semantic-noise variance | 2 x f64 |
//! | encoder parameter count, then values | u64, f64... |
//! | decoder parameter count, then values | u64, f64... |
//! | token values, token by token | f64... |

use std::fs;
use std::path::Path;

use super::{ArchPreset, CodecShape, SemanticCodec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SEMLCKPT";
const VERSION: u32 = 1;

pub fn to_bytes(codec: &SemanticCodec) -> Vec<u8> {
    let s = codec.shape();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(s.preset.code());
    out.push(u8::from(codec.is_quantized()));
    for v in [s.patch_len, s.feature_len, s.constellation_bits as usize, s.token_count] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&s.clip.to_le_bytes());
    out.extend_from_slice(&codec.semantic_noise().to_le_bytes());
    for params in [codec.encoder().params(), codec.decoder().params()] {
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for v in params {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in codec.codebook().tokens.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(
            Error::MalformedPayload {
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            },
        )?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<SemanticCodec> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let preset = ArchPreset::from_code(r.u8()?).ok_or_else(|| Error::Checkpoint("unknown preset".into()))?;
    let quantized = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Checkpoint(format!("bad quantized flag {v}"))),
    };
    let patch_len = r.u32()? as usize;
    let feature_len = r.u32()? as usize;
    let constellation_bits = r.u32()?;
    let token_count = r.u32()? as usize;
    let clip = r.f64()?;
    let semantic_noise = r.f64()?;
    let shape = CodecShape {
        preset,
        patch_len,
        feature_len,
        constellation_bits,
        clip,
        token_count,
    };
    shape.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let n_enc = r.u64()? as usize;
    let enc = r.f64s(n_enc)?;
    let n_dec = r.u64()? as usize;
    let dec = r.f64s(n_dec)?;
    let flat = r.f64s(token_count * patch_len)?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let tokens = flat.chunks(patch_len).map(<[f64]>::to_vec).collect();
    SemanticCodec::from_parts(shape, quantized, enc, dec, tokens, semantic_noise)
}

pub fn save(codec: &SemanticCodec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(codec)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<SemanticCodec> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
