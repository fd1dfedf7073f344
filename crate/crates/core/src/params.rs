//! Named learnable parameters and their binding onto a [`Tape`].

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Projection applied to raw storage after every optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint {
    None,
    /// Elementwise `max(value, floor)`.
    Floor(f64),
}

#[derive(Clone, Debug)]
pub struct Param<S: Scalar> {
    pub name: String,
    pub value: Tensor<S>,
    pub constraint: Constraint,
}

/// Ordered parameter collection. Insertion order is the serialization order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S: Scalar> {
    params: Vec<Param<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>, constraint: Constraint) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value: value.with_requires_grad(true),
            constraint,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param<S> {
        &self.params[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.params.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Number of scalar parameters whose name starts with `prefix`.
    pub fn num_elements_with_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.value.zero_grad());
    }

    /// Re-applies every parameter's [`Constraint`] to its raw storage.
    pub fn apply_constraints(&mut self) {
        for p in &mut self.params {
            if let Constraint::Floor(f) = p.constraint {
                let floor = S::lit(f);
                p.value.data_mut().iter_mut().for_each(|v| *v = v.max(floor));
            }
        }
    }

    /// Overwrites the value of `id`, keeping its shape.
    pub fn set(&mut self, id: ParamId, data: &[S]) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.numel() != data.len() {
            return Err(Error::shape(format!(
                "parameter {} has {} elements, got {}",
                p.name,
                p.value.numel(),
                data.len()
            )));
        }
        p.value.data_mut().copy_from_slice(data);
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            p.value.check_finite(&p.name)?;
        }
        Ok(())
    }
}

/// A [`Tape`] plus lazy, memoized binding of store parameters as leaves.
pub struct Graph<'a, S: Scalar> {
    tape: Tape<S>,
    store: &'a ParamStore<S>,
    bound: Vec<Option<Var>>,
}

impl<'a, S: Scalar> Graph<'a, S> {
    pub fn new(store: &'a ParamStore<S>) -> Self {
        Graph {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'a ParamStore<S> {
        self.store
    }

    /// Leaf for parameter `id`; the same `Var` is returned on every call.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.store.get(id).clone().with_requires_grad(true));
        self.bound[id.0] = Some(v);
        v
    }

    /// Gradient of parameter `id` after `backward`, or zeros if unused.
    pub fn param_grad(&self, id: ParamId) -> Vec<S> {
        self.bound[id.0]
            .and_then(|v| self.tape.grad(v).map(<[S]>::to_vec))
            .unwrap_or_else(|| vec![S::zero(); self.store.get(id).numel()])
    }

    /// Gradients of every store parameter, in store order.
    pub fn param_grads(&self) -> Vec<Vec<S>> {
        self.store.ids().map(|id| self.param_grad(id)).collect()
    }

    pub fn into_tape(self) -> Tape<S> {
        self.tape
    }
}

impl<S: Scalar> Deref for Graph<'_, S> {
    type Target = Tape<S>;
    fn deref(&self) -> &Tape<S> {
        &self.tape
    }
}

impl<S: Scalar> DerefMut for Graph<'_, S> {
    fn deref_mut(&mut self) -> &mut Tape<S> {
        &mut self.tape
    }
}
