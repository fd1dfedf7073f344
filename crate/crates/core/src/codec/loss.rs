use crate::entropy::rate_bits;
use crate::error::{Error, Result};
use crate::params::Graph;
use crate::scalar::Scalar;
use crate::tape::Var;

/// Peak value the distortion is scaled to.
pub const PEAK: f64 = 255.0;

/// The three terms of the rate–distortion objective, all scalars.
#[derive(Clone, Copy, Debug)]
pub struct RdTerms {
    /// `rate_bpp + λ·distortion`.
    pub total: Var,
    /// `−Σ log₂ p / pixels`.
    pub rate_bpp: Var,
    /// `255²·MSE(x, x̂)` on `[0, 1]` images.
    pub distortion: Var,
}

pub fn rd_loss<S: Scalar>(
    g: &mut Graph<'_, S>,
    x: Var,
    x_hat: Var,
    p: Var,
    lambda: f64,
    pixels: usize,
) -> Result<RdTerms> {
    if pixels == 0 {
        return Err(Error::invalid("rate normalized by zero pixels"));
    }
    let bits = rate_bits(g, p)?;
    let rate_bpp = g.scale(bits, S::lit(1.0 / pixels as f64));
    let diff = g.sub(x_hat, x)?;
    let sq = g.square(diff);
    let mse = g.mean(sq);
    let distortion = g.scale(mse, S::lit(PEAK * PEAK));
    let weighted = g.scale(distortion, S::lit(lambda));
    let total = g.add(rate_bpp, weighted)?;
    Ok(RdTerms {
        total,
        rate_bpp,
        distortion,
    })
}
