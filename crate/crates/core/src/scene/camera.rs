use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{Mat3, Real, Vec3};

/// Pinhole camera with a world-to-camera rigid transform.
///
/// Camera space follows the OpenCV convention: `+x` right, `+y` down, `+z`
/// forward. Pixel `(px, py)` is sampled at `(px + 0.5, py + 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Camera<T> {
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        rotation: Mat3<T>,
        translation: Vec3<T>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, rotation, translation, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image must be at least 1x1"));
        }
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("non-finite camera parameter"));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction and
    /// `fov_y_deg` the vertical field of view.
    pub fn look_at(
        eye: Vec3<T>,
        target: Vec3<T>,
        up: Vec3<T>,
        fov_y_deg: T,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() == T::zero() {
            return Err(Error::invalid("look_at eye coincides with target"));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() <= T::lit(1e-9) {
            return Err(Error::invalid("look_at up vector parallel to view direction"));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        let half = (fov_y_deg * T::pi() / T::lit(360.0)).tan();
        let f = T::from_count(height) * T::lit(0.5) / half;
        Self::new(
            f,
            f,
            T::from_count(width) * T::lit(0.5),
            T::from_count(height) * T::lit(0.5),
            rotation,
            translation,
            width,
            height,
        )
    }

    /// `n` cameras evenly spaced on a horizontal circle around `target`.
    pub fn orbit(
        target: Vec3<T>,
        radius: T,
        height: T,
        n: usize,
        fov_y_deg: T,
        width: usize,
        image_height: usize,
    ) -> Result<Vec<Self>> {
        (0..n)
            .map(|k| {
                let angle = T::two_pi() * T::from_count(k) / T::from_count(n.max(1));
                let eye = target + Vec3::new(radius * angle.cos(), radius * angle.sin(), height);
                Self::look_at(eye, target, Vec3::z(), fov_y_deg, width, image_height)
            })
            .collect()
    }

    pub fn to_camera_space(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation * p + self.translation
    }

    pub fn tiles(&self, tile_size: usize) -> (usize, usize) {
        (self.width.div_ceil(tile_size), self.height.div_ceil(tile_size))
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        Camera {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            rotation: self.rotation.map(|v| U::lit(v.as_f64())),
            translation: self.translation.map(|v| U::lit(v.as_f64())),
            width: self.width,
            height: self.height,
        }
    }
}

/// JSON form of a camera, used by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major world-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl<T: Real> From<&Camera<T>> for CameraFile {
    fn from(c: &Camera<T>) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (r, row) in rotation.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = c.rotation[(r, k)].as_f64();
            }
        }
        CameraFile {
            fx: c.fx.as_f64(),
            fy: c.fy.as_f64(),
            cx: c.cx.as_f64(),
            cy: c.cy.as_f64(),
            rotation,
            translation: [c.translation.x.as_f64(), c.translation.y.as_f64(), c.translation.z.as_f64()],
            width: c.width,
            height: c.height,
        }
    }
}

impl CameraFile {
    pub fn to_camera<T: Real>(&self) -> Result<Camera<T>> {
        let r = Mat3::from_fn(|i, j| T::lit(self.rotation[i][j]));
        let t = Vec3::new(T::lit(self.translation[0]), T::lit(self.translation[1]), T::lit(self.translation[2]));
        Camera::new(
            T::lit(self.fx),
            T::lit(self.fy),
            T::lit(self.cx),
            T::lit(self.cy),
            r,
            t,
            self.width,
            self.height,
        )
    }
}
