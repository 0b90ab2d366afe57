//! No-reference quality assessment for equirectangular 360° images.
//!
//! The pipeline picks salient regions of a panorama, renders a gnomonic
//! tangent viewport at each, scores every viewport with a small vision
//! transformer, and averages the scores. Everything numeric is generic over
//! [`Real`] (`f32` or `f64`); the aliases below fix the common choices.

pub mod imageio;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod sampling;
pub mod scalar;
pub mod seed;
pub mod sphere;
pub mod training;

pub use scalar::Real;

pub type ErpImageF32 = imageio::ErpImage<f32>;
pub type ErpImageF64 = imageio::ErpImage<f64>;
pub type SaliencyMapF32 = imageio::SaliencyMap<f32>;
pub type SaliencyMapF64 = imageio::SaliencyMap<f64>;
pub type SphericalPointF32 = sphere::SphericalPoint<f32>;
pub type SphericalPointF64 = sphere::SphericalPoint<f64>;
pub type TangentViewportF32 = sampling::TangentViewport<f32>;
pub type TangentViewportF64 = sampling::TangentViewport<f64>;
pub type ModelParamsF32 = model::ModelParams<f32>;
pub type ModelParamsF64 = model::ModelParams<f64>;
pub type CheckpointF32 = model::Checkpoint<f32>;
pub type CheckpointF64 = model::Checkpoint<f64>;
pub type TrainStateF32 = training::TrainState<f32>;
pub type TrainStateF64 = training::TrainState<f64>;
