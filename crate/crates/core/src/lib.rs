//! Instance segmentation of point clouds by lifting per-frame 2D masks
//! through a coarse-to-fine superpoint pipeline.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

pub mod affinity;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod knn;
pub mod mask_store;
pub mod matching;
pub mod pipeline;
pub mod projection;
pub mod refinement;
pub mod region_growing;
pub mod rle;
pub mod scalar;
pub mod scene;
pub mod superpoint;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Bundle = scene::SceneBundle<f64>;
pub type Config = scene::PipelineConfig<f64>;
pub type Cloud = scene::PointCloud<f64>;
pub type Segmentation = pipeline::PipelineResult<f64>;
pub type Report = evaluation::EvaluationReport<f64>;
pub type Spec = synthetic::SceneSpec<f64>;

pub type Bundle32 = scene::SceneBundle<f32>;
pub type Config32 = scene::PipelineConfig<f32>;
pub type Cloud32 = scene::PointCloud<f32>;
pub type Segmentation32 = pipeline::PipelineResult<f32>;
pub type Report32 = evaluation::EvaluationReport<f32>;
pub type Spec32 = synthetic::SceneSpec<f32>;
