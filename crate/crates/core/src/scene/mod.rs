//! Scene data model, PLY persistence and the synthetic orchard generator.

mod camera;
mod gaussian;
mod io;
mod orchard;

pub use camera::{Camera, CameraFile};
pub use gaussian::{covariance_from, rotation_matrix, Gaussian3D, Level, Scene};
pub use io::{load_scene_ply, save_scene_ply, GroundTruth, PlyConvention, SceneLoad};
pub use orchard::{
    generate_orchard, GeneratedOrchard, LabelCodes, SceneLabel, SyntheticSceneSpec, TEMPLATE_RADIUS_FACTOR,
};
