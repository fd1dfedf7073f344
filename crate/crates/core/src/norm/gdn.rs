//! Generalized divisive normalization and its inverse.
//!
//! `y_i = x_i / sqrt(β_i + Σ_j γ_ij x_j²)` (normal) and
//! `y_i = x_i · sqrt(β_i + Σ_j γ_ij x_j²)` (inverse), evaluated per pixel.
//! The channel mixing `Σ_j γ_ij x_j²` is a 1×1 convolution with bias β.

use crate::error::{Error, Result};
use crate::params::{Constraint, Graph, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Lower bound of the effective β.
pub const BETA_FLOOR: f64 = 1e-6;
/// Diagonal of γ at initialization (γ = 0.1·I).
pub const GAMMA_INIT: f64 = 0.1;

/// Raw GDN parameter values; effective values are `max(β, 1e-6)` and `max(γ, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GdnParams<S> {
    pub channels: usize,
    pub beta: Vec<S>,
    /// Row-major `C×C`, `gamma[i*C + j] = γ_ij`.
    pub gamma: Vec<S>,
}

/// Result of factoring `1/sqrt(β_i)` out of the GDN scaling factor.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedGdn<S> {
    pub channels: usize,
    /// `δ_ij = γ_ij / β_i`, row-major.
    pub delta: Vec<S>,
    /// `1 / sqrt(β_i)`.
    pub channel_scale: Vec<S>,
}

impl<S: Scalar> GdnParams<S> {
    pub fn new(channels: usize, beta: Vec<S>, gamma: Vec<S>) -> Result<Self> {
        if beta.len() != channels || gamma.len() != channels * channels {
            return Err(Error::shape(format!(
                "GDN over {channels} channels needs {channels} β and {} γ values",
                channels * channels
            )));
        }
        Ok(GdnParams { channels, beta, gamma })
    }

    pub fn effective_beta(&self) -> Vec<S> {
        let floor = S::lit(BETA_FLOOR);
        self.beta.iter().map(|&b| b.max(floor)).collect()
    }

    pub fn effective_gamma(&self) -> Vec<S> {
        self.gamma.iter().map(|&g| g.max(S::zero())).collect()
    }

    /// Per-channel scaling factor `s_i(x) = 1/sqrt(β_i + Σ_j γ_ij x_j²)` at one pixel.
    pub fn scaling_factor(&self, x: &[S]) -> Vec<S> {
        let c = self.channels;
        let beta = self.effective_beta();
        let gamma = self.effective_gamma();
        (0..c)
            .map(|i| {
                let norm = (0..c).fold(beta[i], |acc, j| acc + gamma[i * c + j] * x[j] * x[j]);
                S::one() / norm.sqrt()
            })
            .collect()
    }

    /// Splits `s_i(x)` into `channel_scale_i · s̄_i(x)` with
    /// `s̄_i(x) = 1/sqrt(1 + Σ_j δ_ij x_j²)`.
    pub fn factorize(&self) -> FactorizedGdn<S> {
        let c = self.channels;
        let beta = self.effective_beta();
        let gamma = self.effective_gamma();
        let delta = (0..c * c).map(|k| gamma[k] / beta[k / c]).collect();
        let channel_scale = beta.iter().map(|&b| S::one() / b.sqrt()).collect();
        FactorizedGdn {
            channels: c,
            delta,
            channel_scale,
        }
    }
}

impl<S: Scalar> FactorizedGdn<S> {
    /// `s̄_i(x) = 1/sqrt(1 + Σ_j δ_ij x_j²)` at one pixel.
    pub fn normalized_scaling_factor(&self, x: &[S]) -> Vec<S> {
        let c = self.channels;
        (0..c)
            .map(|i| {
                let norm = (0..c).fold(S::one(), |acc, j| acc + self.delta[i * c + j] * x[j] * x[j]);
                S::one() / norm.sqrt()
            })
            .collect()
    }
}

/// Scalar GDN `x / sqrt(a + b·x²)`.
pub fn scalar_gdn<S: Scalar>(x: S, a: S, b: S) -> Result<S> {
    if !(a >= S::lit(BETA_FLOOR)) || !(b >= S::zero()) {
        return Err(Error::invalid(format!(
            "scalar GDN needs a >= {BETA_FLOOR} and b >= 0, got a={a}, b={b}"
        )));
    }
    Ok(x / (a + b * x * x).sqrt())
}

/// GDN layer bound to parameters in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Gdn {
    pub channels: usize,
    pub beta: ParamId,
    /// Stored as a `[C, C, 1, 1]` kernel.
    pub gamma: ParamId,
    pub inverse: bool,
}

impl Gdn {
    /// Registers parameters initialised to β = 1, γ = 0.1·I.
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, channels: usize, inverse: bool) -> Self {
        let beta = store.add(
            format!("{name}.beta"),
            Tensor::full([1, channels, 1, 1], S::one()),
            Constraint::Floor(BETA_FLOOR),
        );
        let mut gamma = Tensor::zeros([channels, channels, 1, 1]);
        for i in 0..channels {
            gamma.data_mut()[i * channels + i] = S::lit(GAMMA_INIT);
        }
        let gamma = store.add(format!("{name}.gamma"), gamma, Constraint::Floor(0.0));
        Gdn {
            channels,
            beta,
            gamma,
            inverse,
        }
    }

    pub fn params<S: Scalar>(&self, store: &ParamStore<S>) -> GdnParams<S> {
        GdnParams {
            channels: self.channels,
            beta: store.get(self.beta).data().to_vec(),
            gamma: store.get(self.gamma).data().to_vec(),
        }
    }

    pub fn set_params<S: Scalar>(&self, store: &mut ParamStore<S>, p: &GdnParams<S>) -> Result<()> {
        store.set(self.beta, &p.beta)?;
        store.set(self.gamma, &p.gamma)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.beta, self.gamma]
    }

    /// `sqrt(β + γ ⋆ x²)` with effective (floored) parameters.
    fn denominator<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        let c = g.shape(x).channels();
        if c != self.channels {
            return Err(Error::shape(format!(
                "GDN over {} channels applied to {c}-channel input",
                self.channels
            )));
        }
        let beta = g.param(self.beta);
        let gamma = g.param(self.gamma);
        let beta = g.clamp_min(beta, S::lit(BETA_FLOOR));
        let gamma = g.clamp_min(gamma, S::zero());
        let sq = g.square(x);
        let norm = g.conv2d(sq, gamma, Some(beta), 1, 0)?;
        Ok(g.sqrt(norm))
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var) -> Result<Var> {
        let d = self.denominator(g, x)?;
        if self.inverse {
            g.mul(x, d)
        } else {
            g.div(x, d)
        }
    }
}
