//! Differentiable substrate: tensors, the autodiff tape, parameterized
//! blocks, distributions, the RMSprop optimizer, and the finite-difference
//! gradient oracle.

pub mod blocks;
pub mod check;
pub mod checkpoint;
pub mod dist;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use blocks::{Act, CausalConv, GatedConvLayer, Gcn, Gru, Mlp};
pub use check::{eval_loss, finite_diff_check, grad};
pub use graph::{Gradients, Graph, Var};
pub use optim::RmsProp;
pub use params::{Binding, Owner, ParamId, ParamSet};
pub use tensor::Tensor;
