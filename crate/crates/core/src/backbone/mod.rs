//! Numeric backbone: tensors, the autodiff graph, distributions, the
//! optimizer and the checkpoint container.

pub mod checkpoint;
pub mod dist;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tensor;

pub use checkpoint::{Checkpoint, NamedArray};
pub use dist::{kl_diag_gaussian, normal_tensor, DiagGaussian, GaussianNodes, MIN_STD};
pub use graph::{Bindings, Gradients, Graph, GraphError, Var};
pub use nn::{Activation, Dense, Mlp};
pub use optim::{adam_step, OptimizerState};
pub use params::{ParamKey, ParamStore};
pub use tensor::Tensor;
