#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatcount::scene::{Camera, Gaussian3D, Scene};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit_quaternion(rng: &mut ChaCha8Rng) -> Quaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return q / n;
        }
    }
}

/// Camera at the origin looking down +z.
pub fn front_camera(width: usize, height: usize, focal: f64) -> Camera<f64> {
    Camera::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, Matrix3::identity(), Vector3::zeros(), width, height)
        .unwrap()
}

/// `n` splats scattered in the view frustum of [`front_camera`].
pub fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> Scene<f64> {
    let gaussians = (0..n)
        .map(|_| {
            let z: f64 = rng.random_range(2.0..6.0);
            Gaussian3D {
                center: Vector3::new(rng.random_range(-0.4..0.4) * z, rng.random_range(-0.4..0.4) * z, z),
                rotation: random_unit_quaternion(rng),
                scale: Vector3::new(rng.random_range(0.02..0.3), rng.random_range(0.02..0.3), rng.random_range(0.02..0.3)),
                color: Vector3::new(rng.random(), rng.random(), rng.random()),
                opacity: rng.random_range(0.05..1.0),
                codes: std::array::from_fn(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))),
            }
        })
        .collect();
    Scene::new(gaussians, Vector3::new(rng.random(), rng.random(), rng.random()))
}

/// Straightforward all-pairs renderer: every splat is tested at every pixel,
/// in ascending (depth, index) order.
pub fn naive_render(scene: &Scene<f64>, cam: &Camera<f64>, floor: f64) -> Vec<Vector3<f64>> {
    struct Splat {
        u: f64,
        v: f64,
        depth: f64,
        conic: Matrix2<f64>,
        opacity: f64,
        color: Vector3<f64>,
    }
    let mut splats: Vec<(usize, Splat)> = Vec::new();
    for (i, g) in scene.gaussians.iter().enumerate() {
        let t = cam.rotation * g.center + cam.translation;
        if t.z <= 0.01 {
            continue;
        }
        let r = UnitQuaternion::from_quaternion(g.rotation).to_rotation_matrix().into_inner();
        let s = Matrix3::from_diagonal(&g.scale.component_mul(&g.scale));
        let cov3 = r * s * r.transpose();
        let j = nalgebra::Matrix2x3::new(
            cam.fx / t.z,
            0.0,
            -cam.fx * t.x / (t.z * t.z),
            0.0,
            cam.fy / t.z,
            -cam.fy * t.y / (t.z * t.z),
        );
        let jw = j * cam.rotation;
        let cov2 = jw * cov3 * jw.transpose() + Matrix2::identity() * 0.3;
        let Some(conic) = cov2.try_inverse() else { continue };
        splats.push((
            i,
            Splat {
                u: cam.fx * t.x / t.z + cam.cx,
                v: cam.fy * t.y / t.z + cam.cy,
                depth: t.z,
                conic,
                opacity: g.opacity,
                color: g.color,
            },
        ));
    }
    splats.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
    let mut out = Vec::with_capacity(cam.width * cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut c = Vector3::zeros();
            let mut tr = 1.0;
            for (_, s) in &splats {
                let d = nalgebra::Vector2::new(px - s.u, py - s.v);
                let m2 = (d.transpose() * s.conic * d)[0];
                if m2 > 9.0 {
                    continue;
                }
                let a = (s.opacity * (-0.5 * m2).exp()).min(0.99);
                if a <= 0.0 {
                    continue;
                }
                c += s.color * (a * tr);
                tr *= 1.0 - a;
                if tr < floor {
                    break;
                }
            }
            out.push(c + scene.background * tr);
        }
    }
    out
}

/// Reference density clustering: core points are joined into components by
/// union-find, components are numbered by their smallest core index, and a
/// border point joins the lowest-numbered component among its core neighbors.
pub fn naive_dbscan(points: &[Vector3<f64>], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbors: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| (points[i] - points[j]).norm() <= eps).collect()).collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_samples).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &neighbors[i] {
            if core[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut id_of_root = std::collections::HashMap::new();
    let mut labels = vec![None; n];
    for i in 0..n {
        if core[i] {
            let root = find(&mut parent, i);
            let next = id_of_root.len();
            labels[i] = Some(*id_of_root.entry(root).or_insert(next));
        }
    }
    for i in 0..n {
        if !core[i] {
            labels[i] = neighbors[i].iter().filter(|&&j| core[j]).filter_map(|&j| labels[j]).min();
        }
    }
    labels
}

pub fn brute_hausdorff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    let directed = |x: &[Vector3<f64>], y: &[Vector3<f64>]| {
        x.iter().map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
