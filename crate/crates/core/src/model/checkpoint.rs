//! Binary checkpoint: magic, version, length-prefixed JSON config, then each
//! parameter as {name, rank, shape, little-endian f32 payload}. Integers are
//! little-endian u32.

use std::path::Path;

use super::{Autoencoder, ModelConfig};
use crate::tensor::Tensor;
use crate::volume::write_atomic;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MPAE";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn checkpoint_bytes(model: &Autoencoder<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config = serde_json::to_vec(model.config()).expect("config serializes");
    put_u32(&mut buf, config.len());
    buf.extend_from_slice(&config);
    put_u32(&mut buf, model.params().len());
    for p in model.params().iter() {
        put_u32(&mut buf, p.name.len());
        buf.extend_from_slice(p.name.as_bytes());
        put_u32(&mut buf, p.tensor.shape().len());
        for &d in p.tensor.shape() {
            put_u32(&mut buf, d);
        }
        for v in p.tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint(model: &Autoencoder<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &checkpoint_bytes(model))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, "truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Autoencoder<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes, path)
}

pub(crate) fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<Autoencoder<f32>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad magic bytes"));
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let len = r.u32()?;
    let config: ModelConfig = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::format(path, format!("malformed config: {e}")))?;
    let mut model = Autoencoder::<f32>::new(config, 0).map_err(|e| Error::format(path, e.to_string()))?;
    let count = r.u32()?;
    if count != model.params().len() {
        return Err(Error::format(path, format!("{count} parameters stored, config implies {}", model.params().len())));
    }
    for _ in 0..count {
        let nlen = r.u32()?;
        let name = std::str::from_utf8(r.take(nlen)?).map_err(|_| Error::format(path, "parameter name is not UTF-8"))?;
        let id = model.params().id(name).ok_or_else(|| Error::format(path, format!("unknown parameter {name:?}")))?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let param = model.params_mut().get_mut(id);
        if shape != param.tensor.shape() {
            return Err(Error::format(path, format!("parameter {name:?} has shape {shape:?}, expected {:?}", param.tensor.shape())));
        }
        let n: usize = shape.iter().product();
        let payload = r.take(n * 4)?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        param.tensor = Tensor::new(shape, data)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last parameter"));
    }
    Ok(model)
}
