//! Per-channel logistic prior over latent values.

use crate::error::{Error, Result};
use crate::params::{Constraint, Graph, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::{self, Var};
use crate::tensor::Tensor;

/// Raw scale giving an effective scale of exactly 1 at initialization.
pub fn unit_raw_scale() -> f64 {
    (1.0f64 - tape::SCALE_FLOOR).exp_m1().ln()
}

/// Factorized prior whose parameters live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct FactorizedPrior {
    pub channels: usize,
    pub loc: ParamId,
    pub raw_scale: ParamId,
}

/// Plain `f64` snapshot of the prior, used to build coding tables.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorValues {
    pub loc: Vec<f64>,
    /// Effective scale `softplus(raw) + 1e-6`.
    pub scale: Vec<f64>,
}

impl FactorizedPrior {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, channels: usize) -> Self {
        let loc = store.add(
            format!("{name}.loc"),
            Tensor::zeros([1, channels, 1, 1]),
            Constraint::None,
        );
        let raw_scale = store.add(
            format!("{name}.raw_scale"),
            Tensor::full([1, channels, 1, 1], S::lit(unit_raw_scale())),
            Constraint::None,
        );
        FactorizedPrior {
            channels,
            loc,
            raw_scale,
        }
    }

    /// Discretized likelihood of `v` (noisy or rounded latents).
    pub fn likelihood<S: Scalar>(&self, g: &mut Graph<'_, S>, v: Var) -> Result<Var> {
        let c = g.shape(v).channels();
        if c != self.channels {
            return Err(Error::shape(format!(
                "prior over {} channels applied to {c}-channel latent",
                self.channels
            )));
        }
        let loc = g.param(self.loc);
        let raw = g.param(self.raw_scale);
        g.likelihood(v, loc, raw)
    }

    pub fn values<S: Scalar>(&self, store: &ParamStore<S>) -> PriorValues {
        PriorValues {
            loc: store.get(self.loc).data().iter().map(|v| v.as_f64()).collect(),
            scale: store
                .get(self.raw_scale)
                .data()
                .iter()
                .map(|r| r.as_f64().softplus() + tape::SCALE_FLOOR)
                .collect(),
        }
    }
}

impl PriorValues {
    pub fn channels(&self) -> usize {
        self.loc.len()
    }

    /// Logistic CDF of channel `c` at `t`.
    pub fn cdf(&self, c: usize, t: f64) -> f64 {
        ((t - self.loc[c]) / self.scale[c]).sigmoid()
    }

    /// Unfloored mass of the unit bin centred at integer `symbol`.
    pub fn pmf(&self, c: usize, symbol: i32) -> f64 {
        tape::bin_mass(f64::from(symbol), self.loc[c], self.scale[c])
    }
}

/// `−Σ log₂ p` as a differentiable scalar.
pub fn rate_bits<S: Scalar>(g: &mut Graph<'_, S>, p: Var) -> Result<Var> {
    if let Some(bad) = g.value(p).data().iter().find(|&&v| !(v > S::zero() && v <= S::one())) {
        return Err(Error::invalid(format!("probability {bad} outside (0, 1]")));
    }
    let ln = g.ln(p);
    let total = g.sum(ln);
    Ok(g.scale(total, S::lit(-std::f64::consts::LOG2_E)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate(values: &[f64]) -> Result<f64> {
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let p = g.constant(Tensor::from_f64([1, 1, 1, values.len()], values).unwrap());
        let r = rate_bits(&mut g, p)?;
        Ok(g.value(r).item().unwrap())
    }

    #[test]
    fn rate_hand_values() {
        assert_eq!(rate(&[0.5; 8]).unwrap(), 8.0);
        assert_eq!(rate(&[1.0; 4]).unwrap(), 0.0);
        assert!((rate(&[0.25, 0.5]).unwrap() - 3.0).abs() < 1e-15);
        assert!(rate(&[0.5, 0.0]).is_err());
        assert!(rate(&[-0.1]).is_err());
    }

    #[test]
    fn pmf_telescopes_to_one() {
        let prior = PriorValues {
            loc: vec![0.3, -2.2],
            scale: vec![0.7, 3.1],
        };
        for c in 0..2 {
            let total: f64 = (-400..=400).map(|s| prior.pmf(c, s)).sum();
            assert!((total - 1.0).abs() < 1e-9, "{total}");
        }
    }

    #[test]
    fn symmetric_prior_is_symmetric() {
        let prior = PriorValues {
            loc: vec![0.0],
            scale: vec![1.7],
        };
        for s in 1..20 {
            assert!((prior.pmf(0, s) - prior.pmf(0, -s)).abs() < 1e-15);
        }
    }

    #[test]
    fn likelihood_channel_mismatch() {
        let mut store = ParamStore::<f64>::new();
        let prior = FactorizedPrior::new(&mut store, "prior", 3);
        let mut g = Graph::new(&store);
        let v = g.constant(Tensor::zeros([1, 2, 2, 2]));
        assert!(matches!(prior.likelihood(&mut g, v), Err(Error::Shape(_))));
    }

    #[test]
    fn initial_scale_is_one() {
        let mut store = ParamStore::<f64>::new();
        let prior = FactorizedPrior::new(&mut store, "prior", 2);
        let values = prior.values(&store);
        assert!(values.scale.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }
}
