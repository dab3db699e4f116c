//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic      "IINMT01"
//! u32 len    model config as key=value text
//! u64        training step counter
//! u32 count  parameter tensors, each: u32 name len, name, u32 rank, u32 dims.., f32 data..
//! f32 x4     lr, beta1, beta2, epsilon
//! u8, f32    clip flag, clip norm
//! u64        optimizer step
//! u32 count  first moments, then the same count of second moments (same tensor layout)
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::{AdamState, ParamSet, Tensor};
use crate::model::{Model, ModelConfig};
use crate::{Error, Result};

pub const MAGIC: &[u8; 7] = b"IINMT01";

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: AdamState,
    pub step: u64,
}

impl Checkpoint {
    /// A fresh checkpoint at step 0 with default Adam settings.
    pub fn fresh(model: Model, lr: f32, clip_norm: Option<f32>) -> Self {
        let mut optimizer = AdamState::with_lr(model.params(), lr);
        optimizer.clip_norm = clip_norm;
        Checkpoint { model, optimizer, step: 0 }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let cfg = self.model.config().to_text();
        put_u32(&mut out, cfg.len());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());

        let params = self.model.params();
        put_u32(&mut out, params.len());
        for (_, name, t) in params.iter() {
            put_tensor(&mut out, name, t);
        }

        let o = &self.optimizer;
        for v in [o.lr, o.beta1, o.beta2, o.epsilon] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(o.clip_norm.is_some() as u8);
        out.extend_from_slice(&o.clip_norm.unwrap_or(0.0).to_le_bytes());
        out.extend_from_slice(&o.step.to_le_bytes());
        put_u32(&mut out, o.first_moment.len());
        for (moments, tag) in [(&o.first_moment, "m"), (&o.second_moment, "v")] {
            for ((_, name, _), t) in params.iter().zip(moments) {
                put_tensor(&mut out, &format!("{tag}:{name}"), t);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let found = &bytes[..bytes.len().min(MAGIC.len())];
        if found != MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(MAGIC).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let mut r = Reader { bytes, pos: MAGIC.len(), expected: 0, found: 0 };
        let cfg_len = r.u32()? as usize;
        let cfg_text = r.take(cfg_len)?;
        let cfg_text = std::str::from_utf8(cfg_text)
            .map_err(|_| Error::Malformed { what: "checkpoint", detail: "config is not UTF-8".into() })?;
        let config = ModelConfig::parse(cfg_text)?;
        let step = r.u64()?;

        let count = r.u32()? as usize;
        r.expected = count;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let (name, t) = r.tensor()?;
            params.add(name, t);
            r.found += 1;
        }
        let model = Model::from_params(config, params)?;

        let lr = r.f32()?;
        let beta1 = r.f32()?;
        let beta2 = r.f32()?;
        let epsilon = r.f32()?;
        let has_clip = r.take(1)?[0] != 0;
        let clip = r.f32()?;
        let opt_step = r.u64()?;
        let moments = r.u32()? as usize;
        if moments != count {
            return Err(Error::TensorCountMismatch { expected: count, found: moments });
        }
        r.expected = 2 * moments;
        r.found = 0;
        let mut first_moment = Vec::with_capacity(moments);
        let mut second_moment = Vec::with_capacity(moments);
        for i in 0..2 * moments {
            let (_, t) = r.tensor()?;
            let shape = model.params().tensors()[i % moments].shape();
            if t.shape() != shape {
                return Err(Error::shape(format!("moment {:?} for parameter {:?}", t.shape(), shape)));
            }
            if i < moments {
                first_moment.push(t);
            } else {
                second_moment.push(t);
            }
            r.found += 1;
        }
        if r.pos != bytes.len() {
            return Err(Error::Malformed {
                what: "checkpoint",
                detail: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        let optimizer = AdamState {
            lr,
            beta1,
            beta2,
            epsilon,
            clip_norm: has_clip.then_some(clip),
            step: opt_step,
            first_moment,
            second_moment,
        };
        Ok(Checkpoint { model, optimizer, step })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("length fits u32").to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.rank());
    for &d in t.shape() {
        put_u32(out, d);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Cursor that reports running out of bytes as a tensor count mismatch.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    expected: usize,
    found: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::TensorCountMismatch { expected: self.expected, found: self.found });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<(String, Tensor)> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Malformed { what: "checkpoint", detail: "tensor name is not UTF-8".into() })?;
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = self.take(numel.checked_mul(4).ok_or_else(|| Error::shape("tensor too large"))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((name, Tensor::new(shape, data)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelKind, ConvRow};
    use crate::raster::FrameSpec;

    fn tiny() -> Checkpoint {
        let cfg = ModelConfig {
            frame: FrameSpec::new(32, 8, 3, 4, 1).unwrap(),
            rows: vec![
                ConvRow { in_ch: 1, out_ch: 2, kernel: 3, stride: 1 },
                ConvRow { in_ch: 2, out_ch: 3, kernel: 3, stride: 2 },
            ],
            d_model: 4,
            layers: 1,
            heads: 2,
            ff_dim: 8,
            ..ModelConfig::desk(ModelKind::Full)
        };
        let mut ck = Checkpoint::fresh(Model::new(cfg, 3).unwrap(), 1e-3, Some(1.0));
        ck.step = 17;
        ck.optimizer.step = 17;
        ck.optimizer.first_moment[0].data_mut()[0] = 0.25;
        ck
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let ck = tiny();
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), fs::read(&path).unwrap());
    }

    #[test]
    fn truncation_reports_missing_tensors() {
        let bytes = tiny().to_bytes();
        for cut in [7, 12, 40, bytes.len() / 2, bytes.len() - 1] {
            let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::TensorCountMismatch { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = tiny().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::BadMagic { .. })));
        assert!(matches!(Checkpoint::from_bytes(b"IIN"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = tiny().to_bytes();
        bytes.push(0);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
