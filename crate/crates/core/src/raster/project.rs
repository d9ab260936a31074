use crate::num::{Mat2, Real, Vec2, Vec3};
use crate::scene::Camera;
use crate::num::Mat3;

/// Default near plane in camera-space depth units.
pub const Z_NEAR: f64 = 0.01;
/// Screen-space low-pass added to every projected covariance, in px².
pub const BLUR: f64 = 0.3;
/// Kernel support in standard deviations (Mahalanobis radius).
pub const SUPPORT_SIGMAS: f64 = 3.0;

/// Why a splat was not projected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    BehindCamera,
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projected2D<T: Real> {
    /// Pixel coordinates of the projected center.
    pub uv: Vec2<T>,
    /// Camera-space z.
    pub depth: T,
    pub cov2d: Mat2<T>,
    /// Inverse of `cov2d`.
    pub conic: Mat2<T>,
    /// `3 · sqrt(λ_max(cov2d))`.
    pub radius: T,
}

impl<T: Real> Projected2D<T> {
    /// Squared Mahalanobis distance of pixel position `p` from the center.
    #[inline]
    pub fn mahalanobis2(&self, px: T, py: T) -> T {
        let dx = px - self.uv.x;
        let dy = py - self.uv.y;
        self.conic[(0, 0)] * dx * dx + (self.conic[(0, 1)] + self.conic[(1, 0)]) * dx * dy + self.conic[(1, 1)] * dy * dy
    }

    /// Truncated screen-space Gaussian: zero beyond the 3σ ellipse.
    #[inline]
    pub fn kernel(&self, px: T, py: T) -> T {
        let m2 = self.mahalanobis2(px, py);
        if m2 > T::lit(SUPPORT_SIGMAS * SUPPORT_SIGMAS) {
            T::zero()
        } else {
            (T::lit(-0.5) * m2).exp()
        }
    }

    /// Half extents of the axis-aligned box enclosing the 3σ ellipse.
    pub fn half_extents(&self) -> (T, T) {
        let s = T::lit(SUPPORT_SIGMAS);
        (s * self.cov2d[(0, 0)].sqrt(), s * self.cov2d[(1, 1)].sqrt())
    }

    /// Minimum squared Mahalanobis distance from the center to the closed box
    /// `[x0, x1] × [y0, y1]`.
    pub fn min_mahalanobis2_to_box(&self, x0: T, x1: T, y0: T, y1: T) -> T {
        let (ux, uy) = (self.uv.x, self.uv.y);
        if ux >= x0 && ux <= x1 && uy >= y0 && uy <= y1 {
            return T::zero();
        }
        let a = self.conic[(0, 0)];
        let b = T::lit(0.5) * (self.conic[(0, 1)] + self.conic[(1, 0)]);
        let c = self.conic[(1, 1)];
        let q = |dx: T, dy: T| a * dx * dx + T::lit(2.0) * b * dx * dy + c * dy * dy;
        let mut best = T::max_value().expect("bounded scalar");
        // the minimum of a convex quadratic over a box not containing its
        // minimizer lies on an edge
        for x in [x0, x1] {
            let dx = x - ux;
            let dy = (-(b * dx) / c).clamp(y0 - uy, y1 - uy);
            best = best.min(q(dx, dy));
        }
        for y in [y0, y1] {
            let dy = y - uy;
            let dx = (-(b * dy) / a).clamp(x0 - ux, x1 - ux);
            best = best.min(q(dx, dy));
        }
        best
    }
}

/// Perspective Jacobian of the pinhole projection at camera-space point `t`.
fn jacobian<T: Real>(camera: &Camera<T>, t: &Vec3<T>) -> nalgebra::Matrix2x3<T> {
    let iz = T::one() / t.z;
    let iz2 = iz * iz;
    nalgebra::Matrix2x3::new(
        camera.fx * iz,
        T::zero(),
        -camera.fx * t.x * iz2,
        T::zero(),
        camera.fy * iz,
        -camera.fy * t.y * iz2,
    )
}

/// `J · W · Σ · Wᵀ · Jᵀ` plus `blur · I`.
pub fn screen_covariance<T: Real>(camera: &Camera<T>, center: &Vec3<T>, cov3d: &Mat3<T>, blur: T) -> Mat2<T> {
    let t = camera.to_camera_space(center);
    let jw = jacobian(camera, &t) * camera.rotation;
    let mut cov = jw * cov3d * jw.transpose();
    let off = T::lit(0.5) * (cov[(0, 1)] + cov[(1, 0)]);
    cov[(0, 1)] = off;
    cov[(1, 0)] = off;
    cov[(0, 0)] += blur;
    cov[(1, 1)] += blur;
    cov
}

pub fn project_point<T: Real>(camera: &Camera<T>, center: &Vec3<T>) -> Option<(Vec2<T>, T)> {
    let t = camera.to_camera_space(center);
    if t.z <= T::lit(Z_NEAR) {
        return None;
    }
    Some((Vec2::new(camera.fx * t.x / t.z + camera.cx, camera.fy * t.y / t.z + camera.cy), t.z))
}

pub fn project<T: Real>(camera: &Camera<T>, center: &Vec3<T>, cov3d: &Mat3<T>) -> Result<Projected2D<T>, Skip> {
    let (uv, depth) = project_point(camera, center).ok_or(Skip::BehindCamera)?;
    let cov2d = screen_covariance(camera, center, cov3d, T::lit(BLUR));
    let det = cov2d.determinant();
    if !(det > T::zero()) || !cov2d.iter().all(|v| v.is_finite()) {
        return Err(Skip::Singular);
    }
    let conic = Mat2::new(cov2d[(1, 1)] / det, -cov2d[(0, 1)] / det, -cov2d[(1, 0)] / det, cov2d[(0, 0)] / det);
    let half_trace = T::lit(0.5) * (cov2d[(0, 0)] + cov2d[(1, 1)]);
    let disc = (half_trace * half_trace - det).max(T::zero()).sqrt();
    let radius = T::lit(SUPPORT_SIGMAS) * (half_trace + disc).sqrt();
    Ok(Projected2D { uv, depth, cov2d, conic, radius })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera<f64> {
        Camera::new(100.0, 100.0, 50.0, 50.0, Mat3::identity(), Vec3::zeros(), 100, 100).unwrap()
    }

    #[test]
    fn optical_axis_and_offset() {
        let c = cam();
        let p = project(&c, &Vec3::new(0.0, 0.0, 5.0), &Mat3::identity()).unwrap();
        assert_eq!(p.uv, Vec2::new(50.0, 50.0));
        assert_eq!(p.depth, 5.0);
        let q = project(&c, &Vec3::new(1.0, 0.0, 5.0), &Mat3::identity()).unwrap();
        assert!((q.uv - Vec2::new(70.0, 50.0)).norm() < 1e-12);
    }

    #[test]
    fn behind_camera_is_skipped() {
        let c = cam();
        assert_eq!(project(&c, &Vec3::new(0.0, 0.0, 0.005), &Mat3::identity()), Err(Skip::BehindCamera));
        assert_eq!(project(&c, &Vec3::new(0.0, 0.0, -3.0), &Mat3::identity()), Err(Skip::BehindCamera));
    }

    #[test]
    fn isotropic_covariance_matches_numeric_jacobian() {
        let c = cam();
        let center = Vec3::new(0.0, 0.0, 5.0);
        let cov3 = Mat3::identity() * 0.01;
        let p = project(&c, &center, &cov3).unwrap();
        assert!((p.cov2d - Mat2::identity() * 4.3).amax() < 1e-9);

        // central differences of the pinhole map as an independent Jacobian
        for center in [Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.7, -0.4, 3.0), Vec3::new(-1.2, 0.9, 8.0)] {
            let h = 1e-6;
            let mut jac = nalgebra::Matrix2x3::<f64>::zeros();
            for k in 0..3 {
                let mut a = center;
                let mut b = center;
                a[k] += h;
                b[k] -= h;
                let (ua, _) = project_point(&c, &a).unwrap();
                let (ub, _) = project_point(&c, &b).unwrap();
                jac.set_column(k, &((ua - ub) / (2.0 * h)));
            }
            let cov3 = Mat3::new(0.02, 0.005, 0.0, 0.005, 0.01, 0.003, 0.0, 0.003, 0.04);
            let oracle = jac * cov3 * jac.transpose();
            let got = screen_covariance(&c, &center, &cov3, 0.0);
            let rel = (got - oracle).amax() / oracle.amax();
            assert!(rel < 1e-6, "relative error {rel}");
        }
    }

    #[test]
    fn kernel_truncates_at_three_sigma() {
        let c = cam();
        let p = project(&c, &Vec3::new(0.0, 0.0, 5.0), &(Mat3::identity() * 0.01)).unwrap();
        let s = 4.3f64.sqrt();
        assert!((p.kernel(50.0, 50.0) - 1.0).abs() < 1e-15);
        assert!(p.kernel(50.0 + 2.99 * s, 50.0) > 0.0);
        assert_eq!(p.kernel(50.0 + 3.01 * s, 50.0), 0.0);
        assert!((p.radius - 3.0 * s).abs() < 1e-12);
    }

    #[test]
    fn box_distance_matches_dense_search() {
        let c = cam();
        let cov3 = Mat3::new(0.05, 0.03, 0.0, 0.03, 0.04, 0.0, 0.0, 0.0, 0.01);
        let p = project(&c, &Vec3::new(0.1, 0.2, 4.0), &cov3).unwrap();
        for (x0, x1, y0, y1) in [(60.0, 70.0, 60.0, 65.0), (20.0, 40.0, 0.0, 10.0), (52.0, 54.0, 40.0, 90.0)] {
            let got = p.min_mahalanobis2_to_box(x0, x1, y0, y1);
            let mut best = f64::MAX;
            let n = 400;
            for i in 0..=n {
                for j in 0..=n {
                    let x = x0 + (x1 - x0) * i as f64 / n as f64;
                    let y = y0 + (y1 - y0) * j as f64 / n as f64;
                    best = best.min(p.mahalanobis2(x, y));
                }
            }
            assert!(got <= best + 1e-9 && best - got < 1e-2 * best.max(1.0), "{got} vs {best}");
        }
    }
}
