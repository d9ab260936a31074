use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub tile_size: usize,
    /// Opacity threshold τ for splat-tile retention.
    pub prune_threshold: f64,
    /// Compositing stops once transmittance drops below this.
    pub transmittance_floor: f64,
    /// Maximum number of splats composited per pixel; `None` is unlimited.
    pub contribution_cap: Option<usize>,
    pub worker_groups: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            prune_threshold: 1.0 / 255.0,
            transmittance_floor: 1e-4,
            contribution_cap: Some(512),
            worker_groups: 8,
        }
    }
}

impl RenderConfig {
    /// No pruning and no per-pixel cap; the reference configuration.
    pub fn exhaustive() -> Self {
        Self { prune_threshold: 0.0, contribution_cap: None, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_size == 0 {
            return Err(Error::invalid("tile_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(Error::invalid("prune_threshold must lie in [0, 1)"));
        }
        if !(self.transmittance_floor > 0.0 && self.transmittance_floor < 1.0) {
            return Err(Error::invalid("transmittance_floor must lie in (0, 1)"));
        }
        if self.contribution_cap == Some(0) {
            return Err(Error::invalid("contribution_cap must be at least 1"));
        }
        if self.worker_groups == 0 {
            return Err(Error::invalid("worker_groups must be at least 1"));
        }
        Ok(())
    }
}
