//! On-disk container: fixed little-endian header followed by the payload.
//!
//! ```text
//! "EASN" | version u8 | model id [u8; 8] | H u16 | W u16 | M u16
//!        | M × (min i16, max i16) | payload length u32 | payload
//! ```

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EASN";
pub const VERSION: u8 = 1;
pub const MODEL_ID_LEN: usize = 8;

pub type ModelId = [u8; MODEL_ID_LEN];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub model_id: ModelId,
    /// Original image size, before padding.
    pub height: u16,
    pub width: u16,
    /// Per-channel symbol range of the coding tables.
    pub ranges: Vec<(i16, i16)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    pub payload: Vec<u8>,
}

impl Header {
    pub fn channels(&self) -> usize {
        self.ranges.len()
    }

    pub fn encoded_len(&self) -> usize {
        4 + 1 + MODEL_ID_LEN + 6 + 4 * self.ranges.len() + 4
    }
}

impl Bitstream {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let channels = u16::try_from(h.ranges.len())
            .map_err(|_| Error::invalid(format!("{} latent channels exceed u16", h.ranges.len())))?;
        let payload_len = u32::try_from(self.payload.len())
            .map_err(|_| Error::invalid("payload longer than 4 GiB"))?;
        if let Some(&(lo, hi)) = h.ranges.iter().find(|(lo, hi)| lo > hi) {
            return Err(Error::invalid(format!("channel range {lo}..={hi} is empty")));
        }
        let mut out = Vec::with_capacity(h.encoded_len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&h.model_id);
        out.extend_from_slice(&h.height.to_le_bytes());
        out.extend_from_slice(&h.width.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        for &(lo, hi) in &h.ranges {
            out.extend_from_slice(&lo.to_le_bytes());
            out.extend_from_slice(&hi.to_le_bytes());
        }
        out.extend_from_slice(&payload_len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Decode("not an EASN bitstream (bad magic)".into()));
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(Error::Decode(format!(
                "unsupported bitstream version {version} (expected {VERSION})"
            )));
        }
        let model_id: ModelId = r.take(MODEL_ID_LEN)?.try_into().expect("fixed length");
        let height = r.u16()?;
        let width = r.u16()?;
        let channels = r.u16()? as usize;
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Decode(format!(
                "degenerate header: {height}x{width} image, {channels} channels"
            )));
        }
        let mut ranges = Vec::with_capacity(channels);
        for c in 0..channels {
            let lo = r.i16()?;
            let hi = r.i16()?;
            if lo > hi {
                return Err(Error::Decode(format!("channel {c} has empty range {lo}..={hi}")));
            }
            ranges.push((lo, hi));
        }
        let len = r.u32()? as usize;
        let payload = r.take(len)?.to_vec();
        if r.pos != bytes.len() {
            return Err(Error::Decode(format!(
                "{} trailing bytes after payload",
                bytes.len() - r.pos
            )));
        }
        Ok(Bitstream {
            header: Header {
                model_id,
                height,
                width,
                ranges,
            },
            payload,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Decode(format!(
                "truncated bitstream: need {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
