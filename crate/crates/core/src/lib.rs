//! Model-based reinforcement learning from pixels with dynamic-horizon value
//! expansion.
//!
//! A latent world model is learned from images. Values of posterior states
//! are estimated by imagining forward under the actor and mixing imagined
//! rewards with critic bootstraps. Each state picks the expansion depths
//! whose values agree best with those of its reconstruction-based twin.

pub mod agent;
pub mod backbone;
pub mod envs;
pub mod horizon;
pub mod value_expansion;
pub mod world_model;
mod error;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = backbone::Tensor<f64>;
pub type Tensor32 = backbone::Tensor<f32>;
pub type Graph64 = backbone::Graph<f64>;
pub type Graph32 = backbone::Graph<f32>;
pub type WorldModel64 = world_model::WorldModel<f64>;
pub type WorldModel32 = world_model::WorldModel<f32>;
pub type Agent64 = agent::Agent<f64>;
pub type Agent32 = agent::Agent<f32>;
pub type ValueFamily64 = value_expansion::ValueFamily<f64>;
pub type ValueFamily32 = value_expansion::ValueFamily<f32>;
