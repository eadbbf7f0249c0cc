//! Binary checkpoint format.
//!
//! All integers little-endian fixed width. Layout:
//!
//! ```text
//! magic            8 bytes  ASCII "IICKPT01"
//! format_version   u32      currently 1
//! elem_width       u32      4 (f32) or 8 (f64)
//! unet config      u32 x 8  image_size, in, cond, out, base, n_mults, bpl, te
//!                  u32 x n  channel mults
//! tensor_count     u32
//! per tensor:      u32 name_len, name bytes (UTF-8),
//!                  u32 rank, u64 x rank dims,
//!                  elem_width x numel values (f32/f64 LE bits)
//! checksum         u64      FNV-1a over every preceding byte
//! ```
//!
//! `load(save(m))` reproduces the parameter table bit-exactly; the checksum
//! is validated on load. The tensor table is written in layout order and
//! must match the layout derived from the stored config.

use std::path::Path;

use crate::denoiser::{DenoiserModel, UNetConfig};
use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

pub const MAGIC: &[u8; 8] = b"IICKPT01";
pub const FORMAT_VERSION: u32 = 1;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn serialize<E: Real>(model: &DenoiserModel<E>) -> Vec<u8> {
    let cfg = &model.config;
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(E::WIDTH);
    w.u32(cfg.image_size as u32);
    w.u32(cfg.in_channels as u32);
    w.u32(cfg.cond_channels as u32);
    w.u32(cfg.out_channels as u32);
    w.u32(cfg.base_channels as u32);
    w.u32(cfg.channel_mults.len() as u32);
    w.u32(cfg.blocks_per_level as u32);
    w.u32(cfg.time_embed_dim as u32);
    for &m in &cfg.channel_mults {
        w.u32(m as u32);
    }
    w.u32(model.params.len() as u32);
    for (name, param) in &model.params {
        w.u32(name.len() as u32);
        w.buf.extend_from_slice(name.as_bytes());
        w.u32(param.tensor.shape().len() as u32);
        for &d in param.tensor.shape() {
            w.u64(d as u64);
        }
        for &v in param.tensor.data() {
            match E::WIDTH {
                4 => w.buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
                _ => w.buf.extend_from_slice(&v.as_f64().to_le_bytes()),
            }
        }
    }
    let checksum = fnv1a64(&w.buf);
    w.u64(checksum);
    w.buf
}

pub fn deserialize<E: Real>(bytes: &[u8]) -> Result<DenoiserModel<E>> {
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Checkpoint("file too short".to_string()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(Error::Checkpoint(format!(
            "checksum mismatch: stored {stored:#018x}, computed {computed:#018x}"
        )));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".to_string()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let width = r.u32()?;
    if width != E::WIDTH {
        return Err(Error::Checkpoint(format!(
            "element width {width} does not match the requested precision ({})",
            E::WIDTH
        )));
    }
    let image_size = r.u32()? as usize;
    let in_channels = r.u32()? as usize;
    let cond_channels = r.u32()? as usize;
    let out_channels = r.u32()? as usize;
    let base_channels = r.u32()? as usize;
    let n_mults = r.u32()? as usize;
    let blocks_per_level = r.u32()? as usize;
    let time_embed_dim = r.u32()? as usize;
    let mut channel_mults = Vec::with_capacity(n_mults);
    for _ in 0..n_mults {
        channel_mults.push(r.u32()? as usize);
    }
    let config = UNetConfig {
        image_size,
        in_channels,
        cond_channels,
        out_channels,
        base_channels,
        channel_mults,
        blocks_per_level,
        time_embed_dim,
    };
    config.validate()?;
    // a zero-seed build supplies the layout (names, shapes, owner depths);
    // values are then overwritten from the file
    let mut model = DenoiserModel::<E>::build(config, 0)?;
    let count = r.u32()? as usize;
    if count != model.params.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors stored, layout expects {}",
            model.params.len()
        )));
    }
    for expected_name in model.params.keys().cloned().collect::<Vec<_>>() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("non-UTF8 tensor name".to_string()))?
            .to_string();
        if name != expected_name {
            return Err(Error::Checkpoint(format!(
                "tensor order mismatch: found {name}, expected {expected_name}"
            )));
        }
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        match E::WIDTH {
            4 => {
                let raw = r.take(4 * numel)?;
                for c in raw.chunks_exact(4) {
                    data.push(E::of_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64));
                }
            }
            _ => {
                let raw = r.take(8 * numel)?;
                for c in raw.chunks_exact(8) {
                    data.push(E::of_f64(f64::from_le_bytes(c.try_into().unwrap())));
                }
            }
        }
        let param = model.params.get_mut(&name).unwrap();
        if param.tensor.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: stored shape {shape:?} does not match layout {:?}",
                param.tensor.shape()
            )));
        }
        let mut tensor = Tensor::new(shape, data)?;
        tensor.requires_grad = true;
        param.tensor = tensor;
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after tensor table".to_string()));
    }
    Ok(model)
}

pub fn save<E: Real>(model: &DenoiserModel<E>, path: &Path, force: bool) -> Result<()> {
    super::io::write_bytes(path, &serialize(model), force)
}

pub fn load<E: Real>(path: &Path) -> Result<DenoiserModel<E>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    deserialize(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DenoiserModel<f32> {
        let cfg = UNetConfig {
            image_size: 8,
            in_channels: 1,
            cond_channels: 1,
            out_channels: 1,
            base_channels: 4,
            channel_mults: vec![1, 2],
            blocks_per_level: 1,
            time_embed_dim: 8,
        };
        DenoiserModel::build(cfg, 77).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = tiny();
        let bytes = serialize(&model);
        let loaded: DenoiserModel<f32> = deserialize(&bytes).unwrap();
        for (name, p) in &model.params {
            assert_eq!(p.tensor.data(), loaded.params[name].tensor.data(), "{name}");
            assert_eq!(p.depth, loaded.params[name].depth);
        }
        // serialize(load(save(m))) is byte-identical
        assert_eq!(bytes, serialize(&loaded));
    }

    #[test]
    fn corruption_is_detected() {
        let model = tiny();
        let mut bytes = serialize(&model);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let err = deserialize::<f32>(&bytes).unwrap_err().to_string();
        assert!(err.contains("checksum"), "{err}");
        // truncation
        let bytes = serialize(&model);
        assert!(deserialize::<f32>(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let model = tiny();
        let bytes = serialize(&model);
        assert!(deserialize::<f64>(&bytes).is_err());
    }

    #[test]
    fn f64_checkpoints_round_trip() {
        let cfg = tiny().config;
        let model = DenoiserModel::<f64>::build(cfg, 5).unwrap();
        let bytes = serialize(&model);
        let loaded: DenoiserModel<f64> = deserialize(&bytes).unwrap();
        for (name, p) in &model.params {
            assert_eq!(p.tensor.data(), loaded.params[name].tensor.data(), "{name}");
        }
    }
}
