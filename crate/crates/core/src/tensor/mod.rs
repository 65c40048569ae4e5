//! N-dimensional arrays, differentiable operators, reverse-mode gradients
//! and the Adam optimizer.

mod adam;
mod array;
pub mod gradcheck;
mod graph;
mod kernels;
pub mod ops;
mod params;
mod real;
mod rng;

pub use adam::AdamState;
pub use array::Tensor;
pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use graph::{Graph, RunningStats, Var, BATCHNORM_EPS, BATCHNORM_MOMENTUM};
pub use params::{Param, ParamSet};
pub use real::{MatMut, MatRef, Real};
pub use rng::RngStream;
