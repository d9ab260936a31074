pub mod cluster;
pub mod error;
pub mod num;
pub mod pipeline;
pub mod ply;
pub mod pointcloud;
pub mod raster;
pub mod scene;
pub mod semantics;
pub mod spatial;

pub use error::{Error, Result};
pub use num::Real;

pub type Scene = scene::Scene<f64>;
pub type Scene32 = scene::Scene<f32>;
pub type Gaussian = scene::Gaussian3D<f64>;
pub type Gaussian32 = scene::Gaussian3D<f32>;
pub type Camera = scene::Camera<f64>;
pub type Camera32 = scene::Camera<f32>;
pub type PointCloud = pointcloud::PointCloud<f64>;
pub type PointCloud32 = pointcloud::PointCloud<f32>;
pub type Autoencoder = semantics::Autoencoder<f64>;
pub type Autoencoder32 = semantics::Autoencoder<f32>;
