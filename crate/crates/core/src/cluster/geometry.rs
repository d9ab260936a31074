use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{dist2, Real, Vec3};

/// Symmetric Hausdorff distance, exact over both sets.
pub fn hausdorff<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("hausdorff distance of an empty set".into()));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)).sqrt())
}

/// `max_a min_b |a − b|²`.
fn directed_hausdorff<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
    let mut worst = T::zero();
    for p in a {
        let mut best = T::max_value().expect("bounded float");
        for q in b {
            let d = dist2(p, q);
            if d < best {
                best = d;
                if best <= worst {
                    break;
                }
            }
        }
        worst = worst.max(best);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    #[default]
    ConvexHull,
    Voxel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeEstimate<T: Real> {
    pub volume: T,
    pub method: VolumeMethod,
    /// The hull was requested but the points were degenerate.
    pub fell_back: bool,
}

/// Volume of a point set; `voxel` is the occupancy cell edge used by the
/// voxel method and by the fallback for flat or tiny sets.
pub fn cluster_volume<T: Real>(points: &[Vec3<T>], method: VolumeMethod, voxel: T) -> VolumeEstimate<T> {
    if method == VolumeMethod::ConvexHull {
        if let Ok(v) = convex_hull_volume(points) {
            return VolumeEstimate { volume: v, method, fell_back: false };
        }
    }
    VolumeEstimate {
        volume: voxel_volume(points, voxel),
        method: VolumeMethod::Voxel,
        fell_back: method == VolumeMethod::ConvexHull,
    }
}

pub fn voxel_volume<T: Real>(points: &[Vec3<T>], cell: T) -> T {
    let occupied: HashSet<[i64; 3]> = points
        .iter()
        .map(|p| {
            [
                (p.x / cell).floor().as_f64() as i64,
                (p.y / cell).floor().as_f64() as i64,
                (p.z / cell).floor().as_f64() as i64,
            ]
        })
        .collect();
    T::from_count(occupied.len()) * cell * cell * cell
}

fn orient<T: Real>(a: &Vec3<T>, b: &Vec3<T>, c: &Vec3<T>, p: &Vec3<T>) -> T {
    (b - a).cross(&(c - a)).dot(&(p - a))
}

/// Incremental convex hull; the volume is summed over signed tetrahedra
/// spanned by the faces and an interior point.
pub fn convex_hull_volume<T: Real>(points: &[Vec3<T>]) -> Result<T> {
    let degenerate = || Error::invalid("convex hull needs four non-coplanar points");
    if points.len() < 4 {
        return Err(degenerate());
    }
    let (lo, hi) = points.iter().fold((points[0], points[0]), |(l, h), p| (l.inf(p), h.sup(p)));
    let scale = (hi - lo).max();
    if !(scale > T::zero()) {
        return Err(degenerate());
    }
    let eps = scale * scale * scale * T::lit(1e-12);

    // Initial tetrahedron from extreme points.
    let i0 = 0;
    let i1 = (0..points.len()).max_by(|&a, &b| cmp(dist2(&points[i0], &points[a]), dist2(&points[i0], &points[b])))
        .unwrap();
    let line = points[i1] - points[i0];
    let i2 = (0..points.len())
        .max_by(|&a, &b| cmp(line.cross(&(points[a] - points[i0])).norm_squared(), line.cross(&(points[b] - points[i0])).norm_squared()))
        .unwrap();
    let i3 = (0..points.len())
        .max_by(|&a, &b| {
            cmp(
                orient(&points[i0], &points[i1], &points[i2], &points[a]).abs(),
                orient(&points[i0], &points[i1], &points[i2], &points[b]).abs(),
            )
        })
        .unwrap();
    if orient(&points[i0], &points[i1], &points[i2], &points[i3]).abs() <= eps * T::lit(1e3) {
        return Err(degenerate());
    }
    let inside = (points[i0] + points[i1] + points[i2] + points[i3]) / T::lit(4.0);
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let push_face = |faces: &mut Vec<[usize; 3]>, a: usize, b: usize, c: usize| {
        if orient(&points[a], &points[b], &points[c], &inside) > T::zero() {
            faces.push([a, c, b]);
        } else {
            faces.push([a, b, c]);
        }
    };
    push_face(&mut faces, i0, i1, i2);
    push_face(&mut faces, i0, i1, i3);
    push_face(&mut faces, i0, i2, i3);
    push_face(&mut faces, i1, i2, i3);

    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for (p, point) in points.iter().enumerate() {
        if [i0, i1, i2, i3].contains(&p) {
            continue;
        }
        let visible: Vec<bool> =
            faces.iter().map(|f| orient(&points[f[0]], &points[f[1]], &points[f[2]], point) > eps).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        edges.clear();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                *edges.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        let mut horizon: Vec<(usize, usize)> =
            edges.keys().copied().filter(|&(a, b)| !edges.contains_key(&(b, a))).collect();
        horizon.sort_unstable();
        let mut kept: Vec<[usize; 3]> = faces.iter().zip(&visible).filter(|(_, &v)| !v).map(|(f, _)| *f).collect();
        kept.extend(horizon.into_iter().map(|(a, b)| [a, b, p]));
        faces = kept;
    }
    let six = T::lit(6.0);
    let volume = faces
        .iter()
        .fold(T::zero(), |acc, f| acc + orient(&points[f[0]], &points[f[1]], &points[f[2]], &inside).abs() / six);
    Ok(volume)
}

fn cmp<T: Real>(a: T, b: T) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal)
}
