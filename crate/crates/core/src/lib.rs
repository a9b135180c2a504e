//! Scenario classification on driving sequences with graph convolutions
//! over lane-graph and agent relations followed by temporal convolutions.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod dataset;
pub mod evaluation;
pub mod lane_graph;
pub mod model;
pub mod scalar;
pub mod scene_graph;
pub mod tensor;
pub mod training;

pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Tape = tensor::Tape<f64>;
pub type SparseRelation = tensor::SparseRelation<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type ModelInput = model::ModelInput<f64>;
pub type Prediction = model::Prediction<f64>;
