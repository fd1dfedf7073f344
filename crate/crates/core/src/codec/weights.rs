//! Versioned little-endian weights file.
//!
//! ```text
//! "EASW" | version u8 | stages u16 | N u16 | M u16 | kernel u16
//!        | variant name (u8 length + ASCII) | init seed u64 | λ f64
//!        | parameter count u32
//!        | per parameter: name (u16 length + UTF-8) | 4 × u32 dims | f64 data
//! ```
//!
//! The model id is the first 8 bytes of the SHA-256 of the whole file.

use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::model::Model;
use crate::entropy::{ModelId, MODEL_ID_LEN};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"EASW";
pub const WEIGHTS_VERSION: u8 = 1;

pub fn model_id(bytes: &[u8]) -> ModelId {
    let digest = Sha256::digest(bytes);
    digest[..MODEL_ID_LEN].try_into().expect("digest is 32 bytes")
}

pub fn format_model_id(id: &ModelId) -> String {
    id.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes the configuration, the training λ and every parameter in
/// store order.
pub fn serialize<S: Scalar>(model: &Model<S>, lambda: f64) -> Result<Vec<u8>> {
    let c = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(WEIGHTS_VERSION);
    for v in [c.stages, c.n, c.m, c.kernel] {
        let v = u16::try_from(v).map_err(|_| Error::invalid(format!("config value {v} exceeds u16")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let name = c.variant.name().as_bytes();
    out.push(name.len() as u8);
    out.extend_from_slice(name);
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&lambda.to_le_bytes());
    out.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for p in model.store.iter() {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::invalid("parameter name too long"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        for d in p.value.shape().0 {
            let d = u32::try_from(d).map_err(|_| Error::invalid("parameter dimension exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

/// Loaded weights with the λ they were trained at and their id.
#[derive(Clone, Debug)]
pub struct LoadedWeights<S: Scalar> {
    pub model: Model<S>,
    pub lambda: f64,
    pub id: ModelId,
}

pub fn deserialize<S: Scalar>(bytes: &[u8]) -> Result<LoadedWeights<S>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::Weights("bad magic".into()));
    }
    let version = r.take(1)?[0];
    if version != WEIGHTS_VERSION {
        return Err(Error::Weights(format!("unsupported version {version}")));
    }
    let stages = r.u16()? as usize;
    let n = r.u16()? as usize;
    let m = r.u16()? as usize;
    let kernel = r.u16()? as usize;
    let name_len = r.take(1)?[0] as usize;
    let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| Error::Weights("variant name is not UTF-8".into()))?;
    let variant = name.parse().map_err(|e: Error| Error::Weights(e.to_string()))?;
    let seed = r.u64()?;
    let lambda = f64::from_bits(r.u64()?);
    let config = ModelConfig {
        stages,
        n,
        m,
        kernel,
        variant,
        seed,
    };
    let mut model = Model::<S>::new(config).map_err(|e| Error::Weights(e.to_string()))?;
    let count = r.u32()? as usize;
    if count != model.store.len() {
        return Err(Error::Weights(format!(
            "{count} parameters stored, architecture has {}",
            model.store.len()
        )));
    }
    for p in model.store.iter_mut() {
        let len = r.u16()? as usize;
        let name = r.take(len)?;
        if name != p.name.as_bytes() {
            return Err(Error::Weights(format!(
                "expected parameter {}, found {}",
                p.name,
                String::from_utf8_lossy(name)
            )));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        if dims != p.value.shape().0 {
            return Err(Error::Weights(format!("parameter {} has shape {dims:?}", p.name)));
        }
        for v in p.value.data_mut() {
            let x = f64::from_bits(r.u64()?);
            if !x.is_finite() {
                return Err(Error::Weights(format!("non-finite value in {}", p.name)));
            }
            *v = S::lit(x);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Weights(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(LoadedWeights {
        model,
        lambda,
        id: model_id(bytes),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Weights(format!("truncated at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
