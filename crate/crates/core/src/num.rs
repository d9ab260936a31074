//! Scalar abstraction shared by every numeric module.
//!
//! All geometry, rendering and clustering code is written against [`Real`],
//! which is implemented for `f32` and `f64`. File formats fix their own
//! precision (PLY stores float32) and convert at the boundary.

use nalgebra as na;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable throughout the crate.
pub trait Real:
    na::RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a count or index.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self.to_f32().expect("finite scalar converts to f32")
    }

    /// Machine epsilon of the concrete type.
    fn epsilon() -> Self;
}

impl Real for f32 {
    #[inline]
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    #[inline]
    fn epsilon() -> Self {
        f64::EPSILON
    }
}

pub type Vec2<T> = na::Vector2<T>;
pub type Vec3<T> = na::Vector3<T>;
pub type Mat2<T> = na::Matrix2<T>;
pub type Mat3<T> = na::Matrix3<T>;

/// Squared Euclidean distance; shared so every neighbor test rounds the same way.
#[inline]
pub fn dist2<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// Converts a vector between scalar types.
#[inline]
pub fn cast3<S: Real, T: Real>(v: &Vec3<S>) -> Vec3<T> {
    Vec3::new(T::lit(v.x.as_f64()), T::lit(v.y.as_f64()), T::lit(v.z.as_f64()))
}
