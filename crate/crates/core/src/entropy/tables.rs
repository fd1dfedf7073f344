//! Integer CDF tables with 16-bit total precision.

use super::prior::PriorValues;
use crate::error::{Error, Result};
use crate::tensor::IntTensor;

pub const PRECISION_BITS: u32 = 16;
pub const TOTAL_FREQUENCY: u32 = 1 << PRECISION_BITS;
/// Width of the raw integer written after an escape slot.
pub const ESCAPE_RAW_BITS: u32 = 32;

/// Coding table for one latent channel.
///
/// Slots `0..=(max − min)` code the symbols `min..=max`; the final slot is the
/// escape for symbols outside that range, which are then written raw.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolTable {
    pub channel: usize,
    pub symbol_min: i32,
    pub symbol_max: i32,
    cdf: Vec<u32>,
}

impl SymbolTable {
    /// Builds a table from per-slot frequencies (in-range symbols then escape).
    pub fn from_frequencies(channel: usize, symbol_min: i32, symbol_max: i32, freqs: &[u32]) -> Result<Self> {
        let slots = slot_count(symbol_min, symbol_max)?;
        if freqs.len() != slots {
            return Err(Error::invalid(format!(
                "{} frequencies for {slots} slots",
                freqs.len()
            )));
        }
        if freqs.iter().any(|&f| f == 0) {
            return Err(Error::invalid("every slot needs a frequency of at least 1"));
        }
        let mut cdf = Vec::with_capacity(slots + 1);
        cdf.push(0u32);
        let mut acc = 0u64;
        for &f in freqs {
            acc += u64::from(f);
            cdf.push(acc.min(u64::from(u32::MAX)) as u32);
        }
        if acc != u64::from(TOTAL_FREQUENCY) {
            return Err(Error::invalid(format!(
                "frequencies sum to {acc}, expected {TOTAL_FREQUENCY}"
            )));
        }
        Ok(SymbolTable {
            channel,
            symbol_min,
            symbol_max,
            cdf,
        })
    }

    /// Quantizes slot probabilities to [`TOTAL_FREQUENCY`], giving every slot
    /// at least 1 and distributing the remainder by largest fractional part
    /// (ties to the lower slot).
    pub fn from_probabilities(channel: usize, symbol_min: i32, symbol_max: i32, probs: &[f64]) -> Result<Self> {
        let slots = slot_count(symbol_min, symbol_max)?;
        if probs.len() != slots {
            return Err(Error::invalid(format!(
                "{} probabilities for {slots} slots",
                probs.len()
            )));
        }
        let clean: Vec<f64> = probs
            .iter()
            .map(|&p| if p.is_finite() && p > 0.0 { p } else { 0.0 })
            .collect();
        let mass: f64 = clean.iter().sum();
        let spare = TOTAL_FREQUENCY - slots as u32;
        let ideal: Vec<f64> = if mass > 0.0 {
            clean.iter().map(|p| p / mass * f64::from(spare)).collect()
        } else {
            vec![f64::from(spare) / slots as f64; slots]
        };
        let mut freqs: Vec<u32> = ideal.iter().map(|v| 1 + v.floor() as u32).collect();
        let assigned: u32 = freqs.iter().sum();
        let mut order: Vec<usize> = (0..slots).collect();
        order.sort_by(|&a, &b| {
            let fa = ideal[a] - ideal[a].floor();
            let fb = ideal[b] - ideal[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let leftover = TOTAL_FREQUENCY.saturating_sub(assigned) as usize;
        for &i in order.iter().cycle().take(leftover) {
            freqs[i] += 1;
        }
        Self::from_frequencies(channel, symbol_min, symbol_max, &freqs)
    }

    /// Table for `channel` of `prior` over `symbol_min..=symbol_max`, with the
    /// escape slot carrying the tail mass outside that range.
    pub fn from_prior(prior: &PriorValues, channel: usize, symbol_min: i32, symbol_max: i32) -> Result<Self> {
        let slots = slot_count(symbol_min, symbol_max)?;
        let mut probs: Vec<f64> = (symbol_min..=symbol_max).map(|s| prior.pmf(channel, s)).collect();
        let below = prior.cdf(channel, f64::from(symbol_min) - 0.5);
        let above = 1.0 - prior.cdf(channel, f64::from(symbol_max) + 0.5);
        probs.push(below + above);
        debug_assert_eq!(probs.len(), slots);
        Self::from_probabilities(channel, symbol_min, symbol_max, &probs)
    }

    /// Cumulative frequencies, `cdf[0] = 0`, last entry `65536`.
    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    pub fn slots(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn escape_slot(&self) -> usize {
        self.slots() - 1
    }

    /// Slot coding `symbol` directly, or `None` if it needs an escape.
    pub fn slot(&self, symbol: i32) -> Option<usize> {
        (self.symbol_min..=self.symbol_max)
            .contains(&symbol)
            .then(|| (i64::from(symbol) - i64::from(self.symbol_min)) as usize)
    }

    pub fn symbol(&self, slot: usize) -> i32 {
        (i64::from(self.symbol_min) + slot as i64) as i32
    }

    /// `(cumulative, frequency)` of a slot.
    pub fn interval(&self, slot: usize) -> (u32, u32) {
        (self.cdf[slot], self.cdf[slot + 1] - self.cdf[slot])
    }

    /// Slot whose interval contains `target < 65536`.
    pub fn find_slot(&self, target: u32) -> usize {
        self.cdf.partition_point(|&c| c <= target) - 1
    }

    /// Codelength of `symbol` under the integer PMF, including raw escape bits.
    pub fn ideal_bits(&self, symbol: i32) -> f64 {
        let (slot, extra) = match self.slot(symbol) {
            Some(s) => (s, 0.0),
            None => (self.escape_slot(), f64::from(ESCAPE_RAW_BITS)),
        };
        let (_, freq) = self.interval(slot);
        f64::from(PRECISION_BITS) - f64::from(freq).log2() + extra
    }
}

fn slot_count(symbol_min: i32, symbol_max: i32) -> Result<usize> {
    if symbol_min > symbol_max {
        return Err(Error::invalid(format!(
            "empty symbol range {symbol_min}..={symbol_max}"
        )));
    }
    let slots = (i64::from(symbol_max) - i64::from(symbol_min) + 2) as u64;
    if slots > u64::from(TOTAL_FREQUENCY) {
        return Err(Error::invalid(format!(
            "symbol range {symbol_min}..={symbol_max} too wide for 16-bit tables"
        )));
    }
    Ok(slots as usize)
}

/// Per-channel `(min − 1, max + 1)` of `y_hat`, clamped to `i16`.
pub fn channel_ranges(y_hat: &IntTensor) -> Vec<(i16, i16)> {
    let [n, c, h, w] = y_hat.shape.0;
    let plane = h * w;
    (0..c)
        .map(|ch| {
            let values = (0..n).flat_map(|b| {
                let start = (b * c + ch) * plane;
                y_hat.data[start..start + plane].iter().copied()
            });
            let (lo, hi) = values.fold((i32::MAX, i32::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let (lo, hi) = if lo > hi { (0, 0) } else { (lo, hi) };
            let clamp = |v: i64| v.clamp(i64::from(i16::MIN), i64::from(i16::MAX)) as i16;
            (clamp(i64::from(lo) - 1), clamp(i64::from(hi) + 1))
        })
        .collect()
}

/// Tables for every channel of `prior` over explicit ranges.
pub fn tables_for_ranges(prior: &PriorValues, ranges: &[(i16, i16)]) -> Result<Vec<SymbolTable>> {
    if ranges.len() != prior.channels() {
        return Err(Error::shape(format!(
            "{} channel ranges for a {}-channel prior",
            ranges.len(),
            prior.channels()
        )));
    }
    ranges
        .iter()
        .enumerate()
        .map(|(c, &(lo, hi))| SymbolTable::from_prior(prior, c, i32::from(lo), i32::from(hi)))
        .collect()
}

/// Tables covering each channel's observed symbol range plus a margin of 1.
pub fn build_symbol_tables(prior: &PriorValues, y_hat: &IntTensor) -> Result<Vec<SymbolTable>> {
    tables_for_ranges(prior, &channel_ranges(y_hat))
}
