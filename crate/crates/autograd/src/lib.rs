//! Dense row-major tensors with tape-based reverse-mode automatic
//! differentiation.
//!
//! Values live in [`Tensor`], which is a plain immutable array that can be
//! shared freely between threads. Differentiable computation happens on a
//! [`Graph`]: leaves are registered with [`Graph::param`] (tracked) or
//! [`Graph::constant`] (untracked), every operation on a [`Var`] appends a
//! node to the graph's record, and [`Graph::backward`] replays the record in
//! reverse to produce [`Gradients`].
//!
//! ```
//! use autograd::{Graph, Tensor};
//!
//! let g = Graph::<f64>::new();
//! let x = g.param(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
//! let loss = x.mul(x).unwrap().sum();
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 1.0]);
//! ```
//!
//! Element types are generic over [`Element`]; training uses `f32` and the
//! verification harness in [`gradcheck`] runs in `f64`.

mod error;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod ops;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use ops::norm::{BatchNormMode, RunningStats};
pub use tensor::Tensor;

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Scalar types a [`Tensor`] can hold.
pub trait Element:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    fn from_f64_lossy(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
