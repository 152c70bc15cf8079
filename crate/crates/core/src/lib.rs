//! Camera-aware Gaussian splatting toolkit.
//!
//! Pixel-aligned Gaussians are lifted along per-pixel Plücker rays, rendered
//! with a differentiable CPU splatter that also produces expected depth, and
//! compared against ground truth through a visibility-masked photometric
//! reward. The same reward drives gradient-based pose refinement and scene
//! fitting.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the file formats
//! and the command-line tool use.

// `!(x > 0)` is how NaN gets rejected; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod camgeo;
pub mod error;
pub mod image;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod raster;
pub mod reward;
pub mod rng;
pub mod scalar;
pub mod scene;
pub mod visibility;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

pub type Vec3 = linalg::Vec3<f64>;
pub type Mat3 = linalg::Mat3<f64>;
pub type CameraIntrinsics = camgeo::CameraIntrinsics<f64>;
pub type CameraPose = camgeo::CameraPose<f64>;
pub type CameraFrame = camgeo::CameraFrame<f64>;
pub type Trajectory = camgeo::Trajectory<f64>;
pub type PluckerMap = camgeo::PluckerMap<f64>;
pub type Image = image::Image<f64>;
pub type Gaussian3D = scene::Gaussian3D<f64>;
pub type GaussianScene = scene::GaussianScene<f64>;
pub type PixelParamMaps = scene::PixelParamMaps<f64>;
pub type RenderOutput = raster::RenderOutput<f64>;
pub type RenderGradients = raster::RenderGradients<f64>;
pub type VisibilityMask = visibility::VisibilityMask;
pub type RewardConfig = reward::RewardConfig<f64>;
pub type RewardReport = reward::RewardReport<f64>;

pub type Vec3f = linalg::Vec3<f32>;
pub type CameraFrameF32 = camgeo::CameraFrame<f32>;
pub type GaussianSceneF32 = scene::GaussianScene<f32>;
pub type RenderOutputF32 = raster::RenderOutput<f32>;
