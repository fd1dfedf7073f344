use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{round_half_away, Scalar};
use crate::tensor::{IntTensor, Tensor};

/// Training-time quantization surrogate: `y + u`, `u ~ U(−½, ½)` elementwise,
/// reproducible from `seed`.
pub fn add_uniform_noise<S: Scalar>(y: &Tensor<S>, seed: u64) -> Tensor<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = y
        .data()
        .iter()
        .map(|&v| v + S::lit(rng.gen_range(-0.5..0.5)))
        .collect();
    Tensor::from_vec(y.shape(), data).expect("shape preserved")
}

/// The noise tensor alone, `u ~ U(−½, ½)`, as used by [`add_uniform_noise`].
pub fn uniform_noise<S: Scalar>(like: &Tensor<S>, seed: u64) -> Tensor<S> {
    add_uniform_noise(&Tensor::zeros(like.shape()), seed)
}

/// Rounds half away from zero into `i32` symbols.
pub fn quantize_round<S: Scalar>(y: &Tensor<S>) -> Result<IntTensor> {
    let limit = f64::from(i32::MAX);
    let data = y
        .data()
        .iter()
        .map(|&v| {
            let r = round_half_away(v).as_f64();
            if !r.is_finite() || r.abs() > limit {
                Err(Error::invalid(format!(
                    "latent value {v} not representable as a 32-bit symbol"
                )))
            } else {
                Ok(r as i32)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    IntTensor::new(y.shape(), data)
}
