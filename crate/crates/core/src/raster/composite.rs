use rayon::prelude::*;

use super::binning::{bin_tiles, TileBins};
use super::image::Image;
use super::project::Projected2D;
use super::schedule::{schedule_tiles, Schedule};
use super::{LoadReport, RenderConfig};
use crate::error::Result;
use crate::num::{Real, Vec3};
use crate::scene::{Camera, Gaussian3D, Level, Scene};

/// Upper clamp on the kernel-scaled opacity of a single splat.
pub const ALPHA_CLAMP: f64 = 0.99;

/// Front-to-back weights `α̂_i · Π_{j<i} (1 − α̂_j)`, with each α̂ clamped to
/// [`ALPHA_CLAMP`].
pub fn compositing_weights<T: Real>(alphas: &[T]) -> Vec<T> {
    let clamp = T::lit(ALPHA_CLAMP);
    let mut t = T::one();
    alphas
        .iter()
        .map(|&a| {
            let a = a.min(clamp);
            let w = a * t;
            t *= T::one() - a;
            w
        })
        .collect()
}

/// How compositing ended at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelTrace<T: Real> {
    pub transmittance: T,
    pub count: u32,
    pub capped: bool,
    pub terminated: bool,
}

/// Walks one pixel's depth-ordered list, reporting `(gaussian, weight)` for
/// every contributing splat.
#[inline]
pub(crate) fn composite_pixel<T: Real>(
    list: &[(usize, T)],
    projected: &[Option<Projected2D<T>>],
    gaussians: &[Gaussian3D<T>],
    px: T,
    py: T,
    floor: T,
    cap: Option<usize>,
    mut visit: impl FnMut(usize, T),
) -> PixelTrace<T> {
    let clamp = T::lit(ALPHA_CLAMP);
    let mut trace = PixelTrace { transmittance: T::one(), count: 0, capped: false, terminated: false };
    for &(i, _) in list {
        let Some(p) = projected[i].as_ref() else { continue };
        let k = p.kernel(px, py);
        if k == T::zero() {
            continue;
        }
        let a = (gaussians[i].opacity * k).min(clamp);
        if a <= T::zero() {
            continue;
        }
        visit(i, a * trace.transmittance);
        trace.transmittance *= T::one() - a;
        trace.count += 1;
        if trace.transmittance < floor {
            trace.terminated = true;
            break;
        }
        if cap.is_some_and(|c| trace.count as usize >= c) {
            trace.capped = true;
            break;
        }
    }
    trace
}

/// Renders every tile, running the tile groups of `schedule` in parallel.
/// `shade` folds each `(gaussian, weight)` contribution into the pixel value.
pub(crate) fn raster<T, O, F>(
    scene: &Scene<T>,
    bins: &TileBins<T>,
    config: &RenderConfig,
    schedule: &Schedule,
    init: O,
    shade: F,
) -> (Vec<O>, Vec<PixelTrace<T>>)
where
    T: Real,
    O: Clone + Send + Sync,
    F: Fn(&mut O, usize, T) + Sync,
{
    let floor = T::lit(config.transmittance_floor);
    let half = T::lit(0.5);
    let per_group: Vec<Vec<(usize, Vec<(O, PixelTrace<T>)>)>> = schedule
        .groups
        .par_iter()
        .map(|tiles| {
            tiles
                .iter()
                .map(|&tile| {
                    let (x0, x1, y0, y1) = bins.tile_rect(tile);
                    let list = &bins.lists[tile];
                    let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0));
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let mut value = init.clone();
                            let trace = composite_pixel(
                                list,
                                &bins.projected,
                                &scene.gaussians,
                                T::from_count(x) + half,
                                T::from_count(y) + half,
                                floor,
                                config.contribution_cap,
                                |i, w| shade(&mut value, i, w),
                            );
                            out.push((value, trace));
                        }
                    }
                    (tile, out)
                })
                .collect()
        })
        .collect();

    let n = bins.width * bins.height;
    let mut values = vec![init; n];
    let empty = PixelTrace { transmittance: T::one(), count: 0, capped: false, terminated: false };
    let mut traces = vec![empty; n];
    for (tile, pixels) in per_group.into_iter().flatten() {
        let (x0, x1, y0, _) = bins.tile_rect(tile);
        let w = x1 - x0;
        for (k, (v, t)) in pixels.into_iter().enumerate() {
            let idx = (y0 + k / w) * bins.width + x0 + k % w;
            values[idx] = v;
            traces[idx] = t;
        }
    }
    (values, traces)
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct RenderStats {
    pub capped_pixels: usize,
    pub early_terminated_pixels: usize,
    pub skipped_singular: usize,
    pub skipped_behind: usize,
    pub pruned: usize,
}

impl RenderStats {
    fn collect<T: Real>(bins: &TileBins<T>, traces: &[PixelTrace<T>]) -> Self {
        Self {
            capped_pixels: traces.iter().filter(|t| t.capped).count(),
            early_terminated_pixels: traces.iter().filter(|t| t.terminated).count(),
            skipped_singular: bins.skipped_singular,
            skipped_behind: bins.skipped_behind,
            pruned: bins.pruned,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameBuffer<T: Real> {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<Vec3<T>>,
    pub transmittance: Vec<T>,
    pub contributions: Vec<u32>,
    pub stats: RenderStats,
    pub load: LoadReport,
    pub schedule: Schedule,
}

impl<T: Real> FrameBuffer<T> {
    pub fn to_image(&self) -> Image<T> {
        let data = self.rgb.iter().flat_map(|c| [c.x, c.y, c.z]).collect();
        Image::new(self.width, self.height, 3, data).expect("frame dimensions are consistent")
    }
}

pub fn render_rgb<T: Real>(scene: &Scene<T>, camera: &Camera<T>, config: &RenderConfig) -> Result<FrameBuffer<T>> {
    let (bins, report) = bin_tiles(scene, camera, config)?;
    let schedule = schedule_tiles(&report, config.worker_groups)?;
    let (colors, traces) = raster(scene, &bins, config, &schedule, Vec3::<T>::zeros(), |acc, i, w| {
        *acc += scene.gaussians[i].color * w;
    });
    let bg = scene.background;
    let rgb = colors.iter().zip(&traces).map(|(c, t)| c + bg * t.transmittance).collect();
    Ok(FrameBuffer {
        width: camera.width,
        height: camera.height,
        rgb,
        transmittance: traces.iter().map(|t| t.transmittance).collect(),
        contributions: traces.iter().map(|t| t.count).collect(),
        stats: RenderStats::collect(&bins, &traces),
        load: report,
        schedule,
    })
}

/// Per-pixel rendered language features for one level.
#[derive(Debug, Clone)]
pub struct FeatureImage<T: Real> {
    pub width: usize,
    pub height: usize,
    pub features: Vec<Vec3<T>>,
    /// Σ of compositing weights.
    pub weight_sum: Vec<T>,
    /// Final transmittance, accumulated as a running product.
    pub transmittance: Vec<T>,
}

pub fn render_features<T: Real>(
    scene: &Scene<T>,
    camera: &Camera<T>,
    level: Level,
    config: &RenderConfig,
) -> Result<FeatureImage<T>> {
    let (bins, report) = bin_tiles(scene, camera, config)?;
    let schedule = schedule_tiles(&report, config.worker_groups)?;
    let (values, traces) = raster(scene, &bins, config, &schedule, (Vec3::<T>::zeros(), T::zero()), |acc, i, w| {
        acc.0 += scene.gaussians[i].codes[level.index()] * w;
        acc.1 += w;
    });
    Ok(FeatureImage {
        width: camera.width,
        height: camera.height,
        features: values.iter().map(|v| v.0).collect(),
        weight_sum: values.iter().map(|v| v.1).collect(),
        transmittance: traces.iter().map(|t| t.transmittance).collect(),
    })
}

/// Sparse per-pixel `(gaussian, weight)` lists of a view, in compositing order.
/// Features enter the render linearly, so these weights are also the
/// Jacobian of every feature pixel with respect to each splat's code.
#[derive(Debug, Clone)]
pub struct Contributions<T: Real> {
    pub width: usize,
    pub height: usize,
    /// CSR offsets, `width * height + 1` entries.
    pub offsets: Vec<usize>,
    pub entries: Vec<(u32, T)>,
}

impl<T: Real> Contributions<T> {
    pub fn pixel(&self, idx: usize) -> &[(u32, T)] {
        &self.entries[self.offsets[idx]..self.offsets[idx + 1]]
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// `F(v) = Σ w_i f_i` with codes supplied externally.
    pub fn render(&self, codes: &[Vec3<T>]) -> Vec<Vec3<T>> {
        (0..self.pixels())
            .map(|p| self.pixel(p).iter().fold(Vec3::zeros(), |acc, &(i, w)| acc + codes[i as usize] * w))
            .collect()
    }
}

pub fn pixel_contributions<T: Real>(
    scene: &Scene<T>,
    camera: &Camera<T>,
    config: &RenderConfig,
) -> Result<Contributions<T>> {
    let (bins, report) = bin_tiles(scene, camera, config)?;
    let schedule = schedule_tiles(&report, config.worker_groups)?;
    let (lists, _) = raster(scene, &bins, config, &schedule, Vec::<(u32, T)>::new(), |acc, i, w| {
        acc.push((i as u32, w));
    });
    let mut offsets = Vec::with_capacity(lists.len() + 1);
    offsets.push(0);
    let mut entries = Vec::new();
    for l in lists {
        entries.extend(l);
        offsets.push(entries.len());
    }
    Ok(Contributions { width: camera.width, height: camera.height, offsets, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Mat3;

    fn cam(w: usize, h: usize) -> Camera<f64> {
        Camera::new(100.0, 100.0, w as f64 / 2.0, h as f64 / 2.0, Mat3::identity(), Vec3::zeros(), w, h).unwrap()
    }

    #[test]
    fn weights_examples() {
        assert_eq!(compositing_weights(&[1.0f64]), vec![0.99]);
        assert_eq!(compositing_weights(&[0.5f64, 0.5]), vec![0.5, 0.25]);
    }

    #[test]
    fn weights_match_direct_products() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..0.99)).collect();
            let w = compositing_weights(&a);
            for i in 0..10 {
                let prod: f64 = a[..i].iter().map(|x| 1.0 - x).product();
                assert!((w[i] - a[i] * prod).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let scene = Scene::new(Vec::new(), Vec3::new(0.2, 0.4, 0.6));
        let fb = render_rgb(&scene, &cam(20, 12), &RenderConfig::default()).unwrap();
        assert!(fb.rgb.iter().all(|c| *c == Vec3::new(0.2, 0.4, 0.6)));
        assert!(fb.transmittance.iter().all(|&t| t == 1.0));
        let feats = render_features(&scene, &cam(20, 12), Level::Whole, &RenderConfig::default()).unwrap();
        assert!(feats.features.iter().all(|f| *f == Vec3::zeros()));
        assert!(feats.weight_sum.iter().all(|&w| w == 0.0));
    }

    /// A splat centered on pixel (8, 8) of a 16x16 frame.
    fn centered(color: Vec3<f64>, opacity: f64, depth: f64) -> Gaussian3D<f64> {
        // pixel center 8.5 with cx = 8 -> x/z = 0.005
        Gaussian3D::isotropic(Vec3::new(0.005 * depth, 0.005 * depth, depth), 0.02 * depth / 5.0, color, opacity)
    }

    #[test]
    fn opaque_splat_gives_its_color() {
        let scene = Scene::new(vec![centered(Vec3::new(1.0, 0.0, 0.0), 1.0, 5.0)], Vec3::zeros());
        let fb = render_rgb(&scene, &cam(16, 16), &RenderConfig::default()).unwrap();
        let c = fb.rgb[8 * 16 + 8];
        assert!((c - Vec3::new(0.99, 0.0, 0.0)).norm() < 1e-12, "{c:?}");
        let mut f = centered(Vec3::new(1.0, 0.0, 0.0), 1.0, 5.0);
        f.codes[2] = Vec3::new(1.0, 0.0, 0.0);
        let img = render_features(&Scene::new(vec![f], Vec3::zeros()), &cam(16, 16), Level::Whole, &RenderConfig::default()).unwrap();
        assert!((img.features[8 * 16 + 8] - Vec3::new(0.99, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn two_half_transparent_splats() {
        let scene = Scene::new(
            vec![centered(Vec3::new(0.0, 0.0, 1.0), 0.5, 6.0), centered(Vec3::new(1.0, 0.0, 0.0), 0.5, 5.0)],
            Vec3::zeros(),
        );
        let fb = render_rgb(&scene, &cam(16, 16), &RenderConfig::default()).unwrap();
        let c = fb.rgb[8 * 16 + 8];
        assert!((c - Vec3::new(0.5, 0.0, 0.25)).norm() < 1e-12, "{c:?}");
        assert_eq!(fb.contributions[8 * 16 + 8], 2);
    }

    #[test]
    fn contribution_cap_limits_count() {
        let scene = Scene::new(
            (0..6).map(|k| centered(Vec3::new(1.0, 1.0, 1.0), 0.1, 5.0 + k as f64)).collect(),
            Vec3::zeros(),
        );
        let capped = RenderConfig { contribution_cap: Some(2), ..RenderConfig::default() };
        let fb = render_rgb(&scene, &cam(16, 16), &capped).unwrap();
        assert_eq!(fb.contributions[8 * 16 + 8], 2);
        assert!(fb.stats.capped_pixels > 0);
    }
}
