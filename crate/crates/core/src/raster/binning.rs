use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::project::{project, Projected2D, Skip};
use super::RenderConfig;
use crate::error::Result;
use crate::num::Real;
use crate::scene::{Camera, Scene};

/// Depth-sorted splat lists per screen tile.
#[derive(Debug, Clone)]
pub struct TileBins<T: Real> {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub width: usize,
    pub height: usize,
    /// Row-major tiles; each list holds `(gaussian index, depth)` ascending by
    /// depth with ties broken by index.
    pub lists: Vec<Vec<(usize, T)>>,
    /// Projection of every splat, `None` where it was skipped.
    pub projected: Vec<Option<Projected2D<T>>>,
    pub skipped_behind: usize,
    pub skipped_singular: usize,
    pub pruned: usize,
}

impl<T: Real> TileBins<T> {
    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Pixel range `(x0, x1, y0, y1)` (exclusive ends) of a tile.
    pub fn tile_rect(&self, tile: usize) -> (usize, usize, usize, usize) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, (x0 + self.tile_size).min(self.width), y0, (y0 + self.tile_size).min(self.height))
    }
}

/// Per-tile estimated pixel coverage summed over binned splats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub tile_size: usize,
    pub tile_loads: Vec<f64>,
    pub total: f64,
    pub max: f64,
    /// Number of splat-tile pairs retained.
    pub pairs: usize,
}

impl LoadReport {
    pub fn from_loads(tiles_x: usize, tiles_y: usize, tile_size: usize, tile_loads: Vec<f64>, pairs: usize) -> Self {
        let total = tile_loads.iter().sum();
        let max = tile_loads.iter().copied().fold(0.0, f64::max);
        Self { tiles_x, tiles_y, tile_size, tile_loads, total, max, pairs }
    }
}

/// Projects every splat, drops those with opacity below the prune threshold,
/// and lists each survivor in every tile its 3σ ellipse reaches (at pixel
/// centers).
pub fn bin_tiles<T: Real>(scene: &Scene<T>, camera: &Camera<T>, config: &RenderConfig) -> Result<(TileBins<T>, LoadReport)> {
    config.validate()?;
    camera.validate()?;
    let ts = config.tile_size;
    let (tiles_x, tiles_y) = camera.tiles(ts);
    let tau = T::lit(config.prune_threshold);

    let projections: Vec<Result<Option<Projected2D<T>>, Skip>> = scene
        .gaussians
        .par_iter()
        .map(|g| {
            if g.opacity < tau {
                return Ok(None);
            }
            let cov = g.covariance().map_err(|_| Skip::Singular)?;
            project(camera, &g.center, &cov).map(Some)
        })
        .collect();

    let mut lists: Vec<Vec<(usize, T)>> = vec![Vec::new(); tiles_x * tiles_y];
    let mut loads = vec![0.0f64; tiles_x * tiles_y];
    let mut projected = Vec::with_capacity(projections.len());
    let (mut skipped_behind, mut skipped_singular, mut pruned, mut pairs) = (0, 0, 0, 0);
    let half = T::lit(0.5);
    let limit = T::lit(super::project::SUPPORT_SIGMAS * super::project::SUPPORT_SIGMAS);
    for (i, p) in projections.into_iter().enumerate() {
        let p = match p {
            Ok(Some(p)) => p,
            Ok(None) => {
                pruned += 1;
                projected.push(None);
                continue;
            }
            Err(Skip::BehindCamera) => {
                skipped_behind += 1;
                projected.push(None);
                continue;
            }
            Err(Skip::Singular) => {
                skipped_singular += 1;
                projected.push(None);
                continue;
            }
        };
        let (hx, hy) = p.half_extents();
        // pixel px covers center px + 0.5
        let lo_x = (p.uv.x - hx - half).floor().as_f64();
        let hi_x = (p.uv.x + hx - half).ceil().as_f64();
        let lo_y = (p.uv.y - hy - half).floor().as_f64();
        let hi_y = (p.uv.y + hy - half).ceil().as_f64();
        if hi_x < 0.0 || hi_y < 0.0 || lo_x >= camera.width as f64 || lo_y >= camera.height as f64 {
            projected.push(Some(p));
            continue;
        }
        let px0 = lo_x.max(0.0) as usize;
        let px1 = (hi_x.min(camera.width as f64 - 1.0)) as usize;
        let py0 = lo_y.max(0.0) as usize;
        let py1 = (hi_y.min(camera.height as f64 - 1.0)) as usize;
        let coverage_scale = {
            let det = p.cov2d.determinant().as_f64();
            let diag = (p.cov2d[(0, 0)] * p.cov2d[(1, 1)]).as_f64();
            std::f64::consts::FRAC_PI_4 * (det / diag).sqrt()
        };
        for ty in py0 / ts..=py1 / ts {
            for tx in px0 / ts..=px1 / ts {
                let x0 = tx * ts;
                let y0 = ty * ts;
                let x1 = (x0 + ts).min(camera.width) - 1;
                let y1 = (y0 + ts).min(camera.height) - 1;
                let m2 = p.min_mahalanobis2_to_box(
                    T::from_count(x0) + half,
                    T::from_count(x1) + half,
                    T::from_count(y0) + half,
                    T::from_count(y1) + half,
                );
                if m2 > limit {
                    continue;
                }
                let tile = ty * tiles_x + tx;
                lists[tile].push((i, p.depth));
                pairs += 1;
                let cx = (x1.min(px1) + 1).saturating_sub(x0.max(px0));
                let cy = (y1.min(py1) + 1).saturating_sub(y0.max(py0));
                loads[tile] += (cx * cy) as f64 * coverage_scale;
            }
        }
        projected.push(Some(p));
    }
    lists.par_iter_mut().for_each(|l| l.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0))));

    let report = LoadReport::from_loads(tiles_x, tiles_y, ts, loads, pairs);
    let bins = TileBins {
        tile_size: ts,
        tiles_x,
        tiles_y,
        width: camera.width,
        height: camera.height,
        lists,
        projected,
        skipped_behind,
        skipped_singular,
        pruned,
    };
    Ok((bins, report))
}
