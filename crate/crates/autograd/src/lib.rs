//! Minimal dense tensor engine with reverse-mode automatic differentiation.
//!
//! Computation is recorded on a [`Tape`] that borrows a [`ParamStore`];
//! [`Tape::backward`] returns [`Gradients`] keyed by parameter. A parameter
//! used several times on one tape receives the sum of its gradients.
//!
//! Broadcasting is deliberately narrow: binary elementwise ops accept either
//! equal shapes, or a right operand whose shape is a suffix of the left
//! operand's shape (a bias row added to every row, a gain multiplied into
//! every row). Anything else is a [`Error::ShapeMismatch`].

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use optim::{AdamW, AdamWConfig, Schedule};
pub use params::{Gradients, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tape::{Reduction, Tape, Var};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type ParamStore32 = ParamStore<f32>;
pub type ParamStore64 = ParamStore<f64>;
pub type Tape32<'p> = Tape<'p, f32>;
pub type Tape64<'p> = Tape<'p, f64>;
