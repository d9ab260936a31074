use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{Mat3, Real, Vec3};

/// Semantic hierarchy level of a language code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Subpart,
    Part,
    #[default]
    Whole,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Subpart, Level::Part, Level::Whole];

    pub fn index(self) -> usize {
        match self {
            Level::Subpart => 0,
            Level::Part => 1,
            Level::Whole => 2,
        }
    }

    /// Single-letter tag used in PLY property names (`lang_<tag>_k`).
    pub fn tag(self) -> char {
        match self {
            Level::Subpart => 's',
            Level::Part => 'p',
            Level::Whole => 'w',
        }
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s" | "subpart" => Ok(Level::Subpart),
            "p" | "part" => Ok(Level::Part),
            "w" | "whole" => Ok(Level::Whole),
            other => Err(Error::invalid(format!("unknown semantic level `{other}`"))),
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::Subpart => "s",
            Level::Part => "p",
            Level::Whole => "w",
        })
    }
}

/// One anisotropic splat with per-level language codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian3D<T: Real> {
    pub center: Vec3<T>,
    /// Unit quaternion, stored `(w, x, y, z)` through nalgebra's constructor.
    pub rotation: Quaternion<T>,
    /// Per-axis standard deviations.
    pub scale: Vec3<T>,
    pub color: Vec3<T>,
    pub opacity: T,
    /// Codes indexed by [`Level::index`].
    pub codes: [Vec3<T>; 3],
}

impl<T: Real> Gaussian3D<T> {
    /// Isotropic, axis-aligned splat with zero codes.
    pub fn isotropic(center: Vec3<T>, sigma: T, color: Vec3<T>, opacity: T) -> Self {
        Self {
            center,
            rotation: Quaternion::identity(),
            scale: Vec3::new(sigma, sigma, sigma),
            color,
            opacity,
            codes: [Vec3::zeros(); 3],
        }
    }

    pub fn code(&self, level: Level) -> &Vec3<T> {
        &self.codes[level.index()]
    }

    pub fn code_mut(&mut self, level: Level) -> &mut Vec3<T> {
        &mut self.codes[level.index()]
    }

    pub fn covariance(&self) -> Result<Mat3<T>> {
        covariance_from(&self.rotation, &self.scale)
    }

    /// `sqrt(det Σ)`, i.e. the product of the axis standard deviations.
    pub fn volume_factor(&self) -> T {
        self.scale.x * self.scale.y * self.scale.z
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.center.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite())
            && self.color.iter().all(|v| v.is_finite())
            && self.opacity.is_finite()
            && self.codes.iter().all(|c| c.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::invalid("non-finite gaussian field"));
        }
        let norm = self.rotation.norm().as_f64();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("quaternion norm {norm} is not 1")));
        }
        if self.scale.iter().any(|&s| s <= T::zero()) {
            return Err(Error::invalid("scale components must be positive"));
        }
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(self.opacity) {
            return Err(Error::invalid("opacity outside [0, 1]"));
        }
        if !self.color.iter().all(|&c| unit(c)) {
            return Err(Error::invalid("color outside [0, 1]"));
        }
        Ok(())
    }
}

/// Rotation matrix of a (normalized on the fly) quaternion.
pub fn rotation_matrix<T: Real>(q: &Quaternion<T>) -> Mat3<T> {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    let two = T::lit(2.0);
    let one = T::one();
    Mat3::new(
        one - two * (y * y + z * z),
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        one - two * (x * x + z * z),
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        one - two * (x * x + y * y),
    )
}

/// `R · diag(σ²) · Rᵀ`, assembled from the upper triangle so the result is
/// exactly symmetric.
pub fn covariance_from<T: Real>(rotation: &Quaternion<T>, scale: &Vec3<T>) -> Result<Mat3<T>> {
    if !rotation.coords.iter().chain(scale.iter()).all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite rotation or scale"));
    }
    if rotation.norm() == T::zero() {
        return Err(Error::invalid("zero quaternion"));
    }
    let r = rotation_matrix(rotation);
    let var = scale.component_mul(scale);
    let mut cov = Mat3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let mut acc = T::zero();
            for k in 0..3 {
                acc += r[(i, k)] * r[(j, k)] * var[k];
            }
            cov[(i, j)] = acc;
            cov[(j, i)] = acc;
        }
    }
    Ok(cov)
}

/// Ordered splat collection. Indices are stable for the scene's lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene<T: Real> {
    pub gaussians: Vec<Gaussian3D<T>>,
    pub background: Vec3<T>,
}

impl<T: Real> Default for Scene<T> {
    fn default() -> Self {
        Self { gaussians: Vec::new(), background: Vec3::zeros() }
    }
}

impl<T: Real> Scene<T> {
    pub fn new(gaussians: Vec<Gaussian3D<T>>, background: Vec3<T>) -> Self {
        Self { gaussians, background }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, g) in self.gaussians.iter().enumerate() {
            g.validate().map_err(|e| Error::invalid(format!("gaussian {i}: {e}")))?;
        }
        Ok(())
    }

    /// Subset keeping the listed indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Scene<T> {
        Scene {
            gaussians: indices.iter().map(|&i| self.gaussians[i].clone()).collect(),
            background: self.background,
        }
    }
}
