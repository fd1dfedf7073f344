//! Learned image compression with adaptive scaling normalization.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which is what the training pipeline,
//! bitstreams and command-line tools use.

pub mod analysis;
pub mod checks;
pub mod codec;
pub mod conv;
pub mod entropy;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod nn;
pub mod norm;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use codec::{Model, ModelConfig, TrainConfig};
pub use error::{Error, Result};
pub use gradcheck::{grad_check, GradCheckReport};
pub use norm::{Direction, Variant};
pub use params::{Constraint, Graph, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{Tape, Var};
pub use tensor::{IntTensor, Shape, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tape64 = Tape<f64>;
pub type ParamStore64 = ParamStore<f64>;
pub type Graph64<'a> = Graph<'a, f64>;
pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;
