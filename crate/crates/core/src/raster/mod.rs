//! Tile-based forward splatting.
//!
//! Splats are projected with the first-order perspective Jacobian, binned into
//! square tiles (dropping pairs below the opacity threshold), scheduled onto
//! worker groups by estimated load, and composited front to back.

mod binning;
mod composite;
mod config;
mod image;
mod project;
mod schedule;

pub use binning::{bin_tiles, LoadReport, TileBins};
pub use composite::{
    compositing_weights, pixel_contributions, render_features, render_rgb, Contributions, FeatureImage,
    FrameBuffer, PixelTrace, RenderStats, ALPHA_CLAMP,
};
pub use config::RenderConfig;
pub use image::{psnr, ssim, Image, PSNR_IDENTICAL_DB};
pub use project::{project, project_point, screen_covariance, Projected2D, Skip, BLUR, SUPPORT_SIGMAS, Z_NEAR};
pub use schedule::{schedule_loads, schedule_tiles, LoadSummary, Schedule};
