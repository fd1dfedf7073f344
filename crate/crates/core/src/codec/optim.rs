use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;

/// Adam with bias correction; moments are kept in `f64`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<S: Scalar>(store: &ParamStore<S>, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from `grads` (store order), then re-applies the
    /// store's parameter constraints.
    pub fn step<S: Scalar>(&mut self, store: &mut ParamStore<S>, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "{} gradient groups for {} parameters",
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, grad), m), v) in store.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if grad.len() != m.len() {
                return Err(Error::shape(format!(
                    "gradient for {} has {} elements, expected {}",
                    p.name,
                    grad.len(),
                    m.len()
                )));
            }
            for (((w, &gr), m), v) in p.value.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * gr;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gr * gr;
                let update = self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                *w -= S::lit(update);
            }
        }
        store.apply_constraints();
        Ok(())
    }
}
