//! Fitting per-Gaussian latent codes to target feature maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{Real, Vec3};
use crate::raster::{pixel_contributions, render_features, Contributions, FeatureImage, RenderConfig};
use crate::scene::{Camera, Level, Scene};

/// Below this norm a feature vector has no direction and the cosine term is
/// dropped for that pixel.
pub const COSINE_NORM_FLOOR: f64 = 1e-8;

/// Per-pixel target latents with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTarget<T: Real> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Vec3<T>>,
    pub mask: Vec<bool>,
}

impl<T: Real> FeatureTarget<T> {
    pub fn new(width: usize, height: usize, values: Vec<Vec3<T>>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || mask.len() != width * height {
            return Err(Error::Dimension(format!(
                "target of {width}x{height} needs {} values and mask entries, got {} and {}",
                width * height,
                values.len(),
                mask.len()
            )));
        }
        Ok(Self { width, height, values, mask })
    }

    /// Uses a rendered feature image as the target; pixels no splat reached
    /// are masked out.
    pub fn from_render(image: &FeatureImage<T>) -> Self {
        Self {
            width: image.width,
            height: image.height,
            values: image.features.clone(),
            mask: image.weight_sum.iter().map(|&w| w > T::zero()).collect(),
        }
    }

    pub fn valid_pixels(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Renders the codes stored in `scene` at `level` as a target.
pub fn render_target<T: Real>(
    scene: &Scene<T>,
    camera: &Camera<T>,
    level: Level,
    config: &RenderConfig,
) -> Result<FeatureTarget<T>> {
    Ok(FeatureTarget::from_render(&render_features(scene, camera, level, config)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `β · mean|r − h| + (1 − β) · (1 − cos(r, h))`.
    #[default]
    L1Cosine,
    /// `mean (r − h)²`; smooth, used for closed-form checks.
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticTrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub lambda_sem: f64,
    pub lambda_reg: f64,
    pub l1_weight: f64,
    pub loss: LossKind,
}

impl Default for SemanticTrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-2, iterations: 500, lambda_sem: 1.0, lambda_reg: 1e-4, l1_weight: 0.5, loss: LossKind::L1Cosine }
    }
}

impl SemanticTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.lambda_sem > 0.0
            && self.lambda_reg >= 0.0
            && (0.0..=1.0).contains(&self.l1_weight)
            && self.learning_rate.is_finite()
            && self.lambda_sem.is_finite()
            && self.lambda_reg.is_finite();
        if !ok {
            return Err(Error::invalid("semantic training needs lr > 0, lambda_sem > 0, lambda_reg >= 0, l1_weight in [0, 1]"));
        }
        Ok(())
    }
}

/// Loss of one pixel and its gradient in the rendered value.
fn pixel_loss<T: Real>(r: &Vec3<T>, h: &Vec3<T>, kind: LossKind, beta: T) -> (T, Vec3<T>) {
    let three = T::lit(3.0);
    let d = r - h;
    match kind {
        LossKind::L2 => (d.norm_squared() / three, d * (T::lit(2.0) / three)),
        LossKind::L1Cosine => {
            let sign = |v: T| {
                if v > T::zero() {
                    T::one()
                } else if v < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            };
            let mut loss = beta * (d.x.abs() + d.y.abs() + d.z.abs()) / three;
            let mut grad = Vec3::new(sign(d.x), sign(d.y), sign(d.z)) * (beta / three);
            let (nr, nh) = (r.norm(), h.norm());
            let floor = T::lit(COSINE_NORM_FLOOR);
            if nr >= floor && nh >= floor {
                let c = r.dot(h) / (nr * nh);
                let wc = T::one() - beta;
                loss += wc * (T::one() - c);
                grad -= (h / (nr * nh) - r * (c / (nr * nr))) * wc;
            }
            (loss, grad)
        }
    }
}

fn check_dims<T: Real>(width: usize, height: usize, target: &FeatureTarget<T>) -> Result<()> {
    if width != target.width || height != target.height {
        return Err(Error::Dimension(format!(
            "rendered {width}x{height} vs target {}x{}",
            target.width, target.height
        )));
    }
    Ok(())
}

/// Mean per-pixel loss over the valid pixels of `target`.
pub fn semantic_loss<T: Real>(
    rendered: &FeatureImage<T>,
    target: &FeatureTarget<T>,
    kind: LossKind,
    l1_weight: T,
) -> Result<T> {
    check_dims(rendered.width, rendered.height, target)?;
    Ok(loss_and_pixel_grads(&rendered.features, target, kind, l1_weight)?.0)
}

/// Loss plus `∂L/∂r` for every pixel (zero on masked pixels).
fn loss_and_pixel_grads<T: Real>(
    rendered: &[Vec3<T>],
    target: &FeatureTarget<T>,
    kind: LossKind,
    beta: T,
) -> Result<(T, Vec<Vec3<T>>)> {
    let valid = target.valid_pixels();
    if valid == 0 {
        return Err(Error::Empty("feature target has no valid pixels".into()));
    }
    let scale = T::one() / T::from_count(valid);
    let per_pixel: Vec<(T, Vec3<T>)> = rendered
        .par_iter()
        .zip(&target.values)
        .zip(&target.mask)
        .map(|((r, h), &m)| if m { pixel_loss(r, h, kind, beta) } else { (T::zero(), Vec3::zeros()) })
        .collect();
    let loss = per_pixel.iter().fold(T::zero(), |a, p| a + p.0) * scale;
    Ok((loss, per_pixel.into_iter().map(|p| p.1 * scale).collect()))
}

/// One camera's frozen compositing weights and its target.
#[derive(Debug, Clone)]
pub struct TrainingView<T: Real> {
    pub contributions: Contributions<T>,
    pub target: FeatureTarget<T>,
}

impl<T: Real> TrainingView<T> {
    pub fn new(contributions: Contributions<T>, target: FeatureTarget<T>) -> Result<Self> {
        check_dims(contributions.width, contributions.height, &target)?;
        Ok(Self { contributions, target })
    }
}

/// Geometry and opacity stay frozen during feature fitting, so each view's
/// compositing weights are computed once.
pub fn prepare_views<T: Real>(
    scene: &Scene<T>,
    cameras: &[Camera<T>],
    targets: Vec<FeatureTarget<T>>,
    render: &RenderConfig,
) -> Result<Vec<TrainingView<T>>> {
    if cameras.is_empty() || cameras.len() != targets.len() {
        return Err(Error::invalid(format!(
            "need at least one camera and one target per camera, got {} and {}",
            cameras.len(),
            targets.len()
        )));
    }
    cameras
        .iter()
        .zip(targets)
        .map(|(cam, target)| TrainingView::new(pixel_contributions(scene, cam, render)?, target))
        .collect()
}

/// `λ_sem · mean_views L_sem + λ_reg · mean_i ‖f_i‖²` and its gradient in
/// every code.
pub fn objective_and_gradient<T: Real>(
    views: &[TrainingView<T>],
    codes: &[Vec3<T>],
    config: &SemanticTrainConfig,
) -> Result<(T, Vec<Vec3<T>>)> {
    let (mut total, mut grad) = data_term(views, codes, config)?;
    let n = T::from_count(codes.len().max(1));
    let lreg = T::lit(config.lambda_reg);
    for (g, f) in grad.iter_mut().zip(codes) {
        total += lreg * f.norm_squared() / n;
        *g += f * (T::lit(2.0) * lreg / n);
    }
    Ok((total, grad))
}

fn data_term<T: Real>(
    views: &[TrainingView<T>],
    codes: &[Vec3<T>],
    config: &SemanticTrainConfig,
) -> Result<(T, Vec<Vec3<T>>)> {
    let beta = T::lit(config.l1_weight);
    let view_scale = T::lit(config.lambda_sem) / T::from_count(views.len().max(1));
    let mut total = T::zero();
    let mut grad = vec![Vec3::zeros(); codes.len()];
    for view in views {
        let rendered = view.contributions.render(codes);
        let (loss, pixel_grads) = loss_and_pixel_grads(&rendered, &view.target, config.loss, beta)?;
        total += loss * view_scale;
        for (p, g) in pixel_grads.iter().enumerate() {
            if !view.target.mask[p] {
                continue;
            }
            for &(i, w) in view.contributions.pixel(p) {
                grad[i as usize] += g * (w * view_scale);
            }
        }
    }
    Ok((total, grad))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FeatureTrainReport {
    /// Objective before the first step and after every accepted step.
    pub loss_trace: Vec<f64>,
    /// Gaussians with zero weight on every valid target pixel; their codes
    /// are left untouched.
    pub unconstrained: Vec<usize>,
    pub iterations: usize,
}

/// Preconditioned gradient descent on the codes of `level`.
///
/// Each code's step is scaled by the inverse of its diagonal Gauss-Newton
/// curvature `Σ w²`, which evens out the very different pixel footprints of
/// large and small splats. Steps are halved until the objective does not
/// increase; a step accepted at full length doubles the next one.
pub fn optimize_gaussian_features<T: Real>(
    scene: &mut Scene<T>,
    views: &[TrainingView<T>],
    level: Level,
    config: &SemanticTrainConfig,
) -> Result<FeatureTrainReport> {
    config.validate()?;
    if views.is_empty() {
        return Err(Error::invalid("feature optimization needs at least one view"));
    }
    let n = scene.len();
    let view_scale = T::lit(config.lambda_sem) / T::from_count(views.len());
    let mut curvature = vec![T::zero(); n];
    for view in views {
        let per_pixel = T::one() / T::from_count(view.target.valid_pixels().max(1));
        for p in 0..view.contributions.pixels() {
            if view.target.mask[p] {
                for &(i, w) in view.contributions.pixel(p) {
                    curvature[i as usize] += w * w * per_pixel * view_scale;
                }
            }
        }
    }
    let unconstrained: Vec<usize> = (0..n).filter(|&i| curvature[i] == T::zero()).collect();
    let reg_curv = T::lit(2.0 * config.lambda_reg) / T::from_count(n.max(1));
    let inv_curv: Vec<T> = curvature
        .iter()
        .map(|&c| if c == T::zero() { T::zero() } else { T::one() / (c + reg_curv) })
        .collect();

    let mut codes: Vec<Vec3<T>> = scene.gaussians.iter().map(|g| *g.code(level)).collect();
    let (mut loss, mut grad) = objective_and_gradient(views, &codes, config)?;
    let mut trace = vec![loss.as_f64()];
    let mut step = T::lit(config.learning_rate);
    let mut iterations = 0;
    'outer: for _ in 0..config.iterations {
        let mut s = step;
        for attempt in 0..40 {
            let trial: Vec<Vec3<T>> =
                codes.iter().zip(&grad).zip(&inv_curv).map(|((f, g), &ic)| f - g * (ic * s)).collect();
            let (trial_loss, trial_grad) = objective_and_gradient(views, &trial, config)?;
            if trial_loss <= loss {
                let improved = trial_loss < loss;
                codes = trial;
                loss = trial_loss;
                grad = trial_grad;
                trace.push(loss.as_f64());
                iterations += 1;
                step = if attempt == 0 { s * T::lit(2.0) } else { s };
                if !improved {
                    break 'outer;
                }
                continue 'outer;
            }
            s = s * T::lit(0.5);
        }
        break;
    }
    for (g, f) in scene.gaussians.iter_mut().zip(codes) {
        *g.code_mut(level) = f;
    }
    Ok(FeatureTrainReport { loss_trace: trace, unconstrained, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Mat3;
    use crate::scene::Gaussian3D;

    fn camera(w: usize, h: usize) -> Camera<f64> {
        Camera::new(60.0, 60.0, w as f64 / 2.0, h as f64 / 2.0, Mat3::identity(), Vec3::zeros(), w, h).unwrap()
    }

    #[test]
    fn identical_render_has_zero_loss() {
        let img = FeatureImage {
            width: 2,
            height: 1,
            features: vec![Vec3::new(0.2, -0.1, 0.5), Vec3::new(1.0, 0.0, 0.0)],
            weight_sum: vec![1.0, 1.0],
            transmittance: vec![0.0, 0.0],
        };
        let target = FeatureTarget::from_render(&img);
        assert!(semantic_loss(&img, &target, LossKind::L1Cosine, 0.5f64).unwrap().abs() < 1e-15);
    }

    #[test]
    fn fully_masked_target_is_an_error() {
        let img = FeatureImage {
            width: 1,
            height: 1,
            features: vec![Vec3::new(1.0, 0.0, 0.0)],
            weight_sum: vec![0.0],
            transmittance: vec![1.0],
        };
        let target = FeatureTarget::from_render(&img);
        assert!(matches!(semantic_loss(&img, &target, LossKind::L1Cosine, 0.5), Err(Error::Empty(_))));
    }

    #[test]
    fn huge_splat_converges_to_scaled_target() {
        let h = Vec3::new(0.3, -0.6, 0.2);
        let mut g = Gaussian3D::isotropic(Vec3::new(0.0, 0.0, 4.0), 50.0, Vec3::new(0.5, 0.5, 0.5), 1.0);
        g.codes = [Vec3::zeros(); 3];
        let mut scene = Scene::new(vec![g], Vec3::zeros());
        let cam = camera(8, 8);
        let target = FeatureTarget::new(8, 8, vec![h; 64], vec![true; 64]).unwrap();
        let views = prepare_views(&scene, &[cam], vec![target], &RenderConfig::default()).unwrap();
        assert!(views[0].contributions.entries.iter().all(|&(_, w)| (w - 0.99).abs() < 1e-12));
        let cfg = SemanticTrainConfig { lambda_reg: 0.0, loss: LossKind::L2, iterations: 200, ..Default::default() };
        let report = optimize_gaussian_features(&mut scene, &views, Level::Whole, &cfg).unwrap();
        assert!((scene.gaussians[0].codes[2] - h / 0.99).norm() < 1e-3);
        assert!(report.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn invisible_splat_is_flagged_and_untouched() {
        let mut visible = Gaussian3D::isotropic(Vec3::new(0.0, 0.0, 4.0), 0.5, Vec3::new(0.5, 0.5, 0.5), 0.8);
        visible.codes = [Vec3::zeros(); 3];
        let mut hidden = Gaussian3D::isotropic(Vec3::new(0.0, 0.0, -4.0), 0.5, Vec3::new(0.5, 0.5, 0.5), 0.8);
        hidden.codes = [Vec3::new(0.1, 0.2, 0.3); 3];
        let mut scene = Scene::new(vec![visible, hidden], Vec3::zeros());
        let target = FeatureTarget::new(16, 16, vec![Vec3::new(1.0, 0.0, 0.0); 256], vec![true; 256]).unwrap();
        let views = prepare_views(&scene, &[camera(16, 16)], vec![target], &RenderConfig::default()).unwrap();
        let cfg = SemanticTrainConfig { iterations: 20, ..Default::default() };
        let report = optimize_gaussian_features(&mut scene, &views, Level::Whole, &cfg).unwrap();
        assert_eq!(report.unconstrained, vec![1]);
        assert_eq!(scene.gaussians[1].codes[2], Vec3::new(0.1, 0.2, 0.3));
        assert!(scene.gaussians[0].codes[2].x > 0.0);
    }
}
