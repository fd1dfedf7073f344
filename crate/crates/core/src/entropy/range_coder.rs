//! 32-bit renormalizing range coder with carry propagation.
//!
//! The encoder keeps a 33-bit `low` and a pending byte plus a run of `0xFF`
//! bytes that a later carry may still increment. Renormalization happens a
//! byte at a time whenever `range < 2^24`.

use super::tables::{SymbolTable, PRECISION_BITS, TOTAL_FREQUENCY};
use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    /// Narrows the interval to `[cum, cum + freq)` out of 65536.
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= TOTAL_FREQUENCY);
        let r = self.range >> PRECISION_BITS;
        self.low += u64::from(r) * u64::from(cum);
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn encode_symbol(&mut self, table: &SymbolTable, symbol: i32) {
        match table.slot(symbol) {
            Some(slot) => {
                let (cum, freq) = table.interval(slot);
                self.encode(cum, freq);
            }
            None => {
                let (cum, freq) = table.interval(table.escape_slot());
                self.encode(cum, freq);
                let raw = symbol as u32;
                self.encode(raw >> 16, 1);
                self.encode(raw & 0xFFFF, 1);
            }
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low >= 1 << 32 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Emits the shortest tail that still identifies the final interval.
    pub fn finish(mut self) -> Vec<u8> {
        let end = self.low + u64::from(self.range);
        // Point in [low, end) with the most trailing zero bits.
        let point = (0..=32u32)
            .rev()
            .map(|k| {
                let mask = (1u64 << k) - 1;
                (self.low + mask) & !mask
            })
            .find(|&v| v < end)
            .unwrap_or(self.low);
        self.low = point;
        for _ in 0..5 {
            self.shift_low();
        }
        debug_assert_eq!(self.out.first(), Some(&0));
        let mut bytes = self.out.split_off(1);
        while bytes.last() == Some(&0) {
            bytes.pop();
        }
        bytes
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    /// Bytes past the end of `input` read as zero.
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            code: 0,
            range: u32::MAX,
            input,
            pos: 0,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | u32::from(d.next_byte());
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Cumulative target in `[0, 65536)` for the next symbol.
    fn target(&self) -> Result<(u32, u32)> {
        let r = self.range >> PRECISION_BITS;
        let t = self.code / r;
        if t >= TOTAL_FREQUENCY {
            return Err(Error::Decode(format!(
                "corrupt payload: code {:#x} outside range {:#x}",
                self.code, self.range
            )));
        }
        Ok((r, t))
    }

    fn consume(&mut self, r: u32, cum: u32, freq: u32) {
        self.code -= r * cum;
        self.range = r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | u32::from(self.next_byte());
            self.range <<= 8;
        }
    }

    pub fn decode_symbol(&mut self, table: &SymbolTable) -> Result<i32> {
        let (r, t) = self.target()?;
        let slot = table.find_slot(t);
        let (cum, freq) = table.interval(slot);
        self.consume(r, cum, freq);
        if slot != table.escape_slot() {
            return Ok(table.symbol(slot));
        }
        let mut raw = 0u32;
        for _ in 0..2 {
            let (r, chunk) = self.target()?;
            self.consume(r, chunk, 1);
            raw = (raw << 16) | chunk;
        }
        Ok(raw as i32)
    }

    /// True once every input byte has been consumed.
    pub fn exhausted(&self) -> bool {
        self.pos >= self.input.len()
    }
}

/// Encodes `symbols[i]` with `tables[i]`.
pub fn range_encode(symbols: &[i32], tables: &[&SymbolTable]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(Error::invalid(format!(
            "{} symbols but {} tables",
            symbols.len(),
            tables.len()
        )));
    }
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        enc.encode_symbol(t, s);
    }
    Ok(enc.finish())
}

/// Decodes `count` symbols, the `i`-th with `tables[i]`.
pub fn range_decode(bytes: &[u8], tables: &[&SymbolTable], count: usize) -> Result<Vec<i32>> {
    if tables.len() < count {
        return Err(Error::invalid(format!(
            "{count} symbols requested but only {} tables",
            tables.len()
        )));
    }
    let mut dec = RangeDecoder::new(bytes);
    tables[..count].iter().map(|t| dec.decode_symbol(t)).collect()
}

/// Ideal codelength in bits of `symbols` under the integer tables.
pub fn ideal_bits(symbols: &[i32], tables: &[&SymbolTable]) -> f64 {
    symbols.iter().zip(tables).map(|(&s, t)| t.ideal_bits(s)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform4() -> SymbolTable {
        // symbols 0..=2 plus escape, all 16384
        SymbolTable::from_frequencies(0, 0, 2, &[16384; 4]).unwrap()
    }

    #[test]
    fn three_symbols_uniform_four() {
        let t = uniform4();
        let tables = [&t; 3];
        let symbols = [0, 2, 1];
        assert_eq!(ideal_bits(&symbols, &tables), 6.0);
        let bytes = range_encode(&symbols, &tables).unwrap();
        assert!((bytes.len() * 8) as f64 <= 6.0 + 64.0);
        assert_eq!(range_decode(&bytes, &tables, 3).unwrap(), symbols);
    }

    #[test]
    fn empty_sequence() {
        let bytes = range_encode(&[], &[]).unwrap();
        assert!(bytes.len() <= 8);
        assert!(range_decode(&bytes, &[], 0).unwrap().is_empty());
    }

    #[test]
    fn escapes_round_trip() {
        let t = uniform4();
        let symbols = [5, -1, i32::MIN, i32::MAX, 1, 65536, -65537];
        let tables = vec![&t; symbols.len()];
        let bytes = range_encode(&symbols, &tables).unwrap();
        assert_eq!(range_decode(&bytes, &tables, symbols.len()).unwrap(), symbols);
        let bits = (bytes.len() * 8) as f64;
        assert!(bits <= ideal_bits(&symbols, &tables) + 64.0);
    }

    #[test]
    fn carry_propagation() {
        // Skewed table pushes low towards the top of the interval, forcing
        // long 0xFF runs and carries.
        let t = SymbolTable::from_frequencies(0, 0, 1, &[1, 65534, 1]).unwrap();
        let symbols: Vec<i32> = (0..5000).map(|i| if i % 97 == 0 { 0 } else { 1 }).collect();
        let tables = vec![&t; symbols.len()];
        let bytes = range_encode(&symbols, &tables).unwrap();
        assert_eq!(range_decode(&bytes, &tables, symbols.len()).unwrap(), symbols);
        assert!((bytes.len() * 8) as f64 <= ideal_bits(&symbols, &tables) + 64.0);
    }

    #[test]
    fn corrupt_code_is_reported() {
        let t = SymbolTable::from_frequencies(0, 0, 0, &[65535, 1]).unwrap();
        // A code at the very top of the range lies outside r·65536.
        let err = range_decode(&[0xFF; 8], &[&t, &t], 2);
        assert!(matches!(err, Err(Error::Decode(_))));
    }

    #[test]
    fn mismatched_lengths() {
        let t = uniform4();
        assert!(range_encode(&[0, 1], &[&t]).is_err());
        assert!(range_decode(&[], &[&t], 2).is_err());
    }
}
