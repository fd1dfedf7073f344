//! Quantization, the factorized prior, and range coding of latents.

mod bitstream;
mod prior;
mod quantize;
mod range_coder;
mod tables;

pub use bitstream::{Bitstream, Header, ModelId, MAGIC, MODEL_ID_LEN, VERSION};
pub use prior::{rate_bits, unit_raw_scale, FactorizedPrior, PriorValues};
pub use quantize::{add_uniform_noise, quantize_round, uniform_noise};
pub use range_coder::{ideal_bits, range_decode, range_encode, RangeDecoder, RangeEncoder};
pub use tables::{
    build_symbol_tables, channel_ranges, tables_for_ranges, SymbolTable, ESCAPE_RAW_BITS, PRECISION_BITS,
    TOTAL_FREQUENCY,
};
