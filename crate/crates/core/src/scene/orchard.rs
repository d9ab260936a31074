//! Synthetic single-tree orchard scenes with known fruit counts.

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Gaussian3D, GroundTruth, Scene};
use crate::error::{Error, Result};
use crate::num::{Real, Vec3};

/// Half-width of the opacity range given to near-transparent "floater" splats.
const FLOATER_OPACITY: (f64, f64) = (0.0005, 0.0035);
/// Tangential splat deviation of fruit skin splats relative to their spacing.
const FRUIT_TANGENT_SPREAD: f64 = 0.5;
/// Thickness of fruit skin splats as a fraction of the fruit radius.
const FRUIT_THICKNESS: f64 = 0.03;
/// Template radius per unit fruit radius for clouds sampled from generated
/// fruits; see [`SyntheticSceneSpec::template_radius`].
pub const TEMPLATE_RADIUS_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    pub fruit_count: usize,
    pub fruit_radius_mean: f64,
    pub fruit_radius_std: f64,
    /// Full extents of the canopy ellipsoid.
    pub canopy_extent: [f64; 3],
    pub foliage_gaussians: usize,
    pub trunk_segments: usize,
    pub fruit_label: String,
    pub foliage_label: String,
    pub branch_label: String,
    pub rng_seed: u64,
    /// Number of fruit pairs placed in surface contact.
    pub contact_pairs: usize,
    /// Fraction of foliage splats drawn in fruit-like colors.
    pub distractor_fraction: f64,
    /// Fraction of foliage splats that are nearly transparent.
    pub floater_fraction: f64,
    /// Relative Gaussian jitter applied to every label code.
    pub code_noise: f64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self::standard(291, 0)
    }
}

impl SyntheticSceneSpec {
    /// The standard orchard: roughly 50k splats for a few hundred fruits.
    pub fn standard(fruit_count: usize, rng_seed: u64) -> Self {
        Self {
            fruit_count,
            fruit_radius_mean: 0.04,
            fruit_radius_std: 0.002,
            canopy_extent: [4.0, 4.0, 3.0],
            foliage_gaussians: 44_000,
            trunk_segments: 40,
            fruit_label: "apple".into(),
            foliage_label: "leaf".into(),
            branch_label: "branch".into(),
            rng_seed,
            contact_pairs: 0,
            distractor_fraction: 0.08,
            floater_fraction: 0.03,
            code_noise: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fruit_radius_mean > 0.0) || self.fruit_radius_std < 0.0 {
            return Err(Error::invalid("fruit radii must be positive"));
        }
        if self.canopy_extent.iter().any(|&e| !(e > 4.0 * self.fruit_radius_mean)) {
            return Err(Error::invalid("canopy extent too small for the fruit radius"));
        }
        if 2 * self.contact_pairs > self.fruit_count {
            return Err(Error::invalid("contact_pairs exceeds fruit_count / 2"));
        }
        for f in [self.distractor_fraction, self.floater_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid("fractions must lie in [0, 1]"));
            }
        }
        if !(self.code_noise >= 0.0) {
            return Err(Error::invalid("code_noise must be non-negative"));
        }
        Ok(())
    }

    /// Radius of the sphere template matching clouds sampled from this spec's
    /// fruits.
    pub fn template_radius(&self) -> f64 {
        TEMPLATE_RADIUS_FACTOR * self.fruit_radius_mean
    }

    pub fn labels(&self) -> [&str; 3] {
        [&self.fruit_label, &self.foliage_label, &self.branch_label]
    }

    fn canopy_center(&self) -> [f64; 3] {
        [0.0, 0.0, 0.35 * self.canopy_extent[2] + 0.5 * self.canopy_extent[2]]
    }
}

/// Semantic class the generator assigned to each splat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneLabel {
    Fruit,
    Foliage,
    Branch,
}

/// Latent codes written into the generated splats, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCodes<T: Real> {
    pub fruit: Vec3<T>,
    pub foliage: Vec3<T>,
    pub branch: Vec3<T>,
}

impl<T: Real> LabelCodes<T> {
    pub fn get(&self, label: SceneLabel) -> &Vec3<T> {
        match label {
            SceneLabel::Fruit => &self.fruit,
            SceneLabel::Foliage => &self.foliage,
            SceneLabel::Branch => &self.branch,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedOrchard<T: Real> {
    pub scene: Scene<T>,
    pub truth: GroundTruth,
    /// Class of each splat, parallel to `scene.gaussians`.
    pub labels: Vec<SceneLabel>,
}

fn uniform_in_ellipsoid(rng: &mut ChaCha8Rng, center: [f64; 3], semi: [f64; 3]) -> [f64; 3] {
    loop {
        let p: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return [center[0] + p[0] * semi[0], center[1] + p[1] * semi[1], center[2] + p[2] * semi[2]];
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

fn unit_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let d: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-9 {
            return [d[0] / n, d[1] / n, d[2] / n];
        }
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Splat in f64 before conversion to the scene scalar.
struct Splat {
    center: [f64; 3],
    rotation: [f64; 4],
    scale: [f64; 3],
    color: [f64; 3],
    opacity: f64,
    label: SceneLabel,
}

/// Builds a tree with trunk, branches, leaf clumps and fruits.
///
/// Fruit centers are at least `2 · fruit_radius_mean` apart, except for the
/// requested contact pairs, which touch.
pub fn generate_orchard<T: Real>(spec: &SyntheticSceneSpec, codes: &LabelCodes<T>) -> Result<GeneratedOrchard<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let canopy = spec.canopy_center();
    let semi = spec.canopy_extent.map(|e| 0.5 * e);
    let mut splats: Vec<Splat> = Vec::new();

    // trunk and branches
    let trunk_top = [0.0, 0.0, canopy[2]];
    let trunk_pieces = (spec.trunk_segments / 4).max(usize::from(spec.trunk_segments > 0));
    let push_segment = |rng: &mut ChaCha8Rng, a: [f64; 3], b: [f64; 3], thickness: f64, splats: &mut Vec<Splat>| {
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-6);
        let dir = nalgebra::Vector3::new(d[0] / len, d[1] / len, d[2] / len);
        let rot = UnitQuaternion::rotation_between(&nalgebra::Vector3::x(), &dir)
            .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&nalgebra::Vector3::z_axis(), std::f64::consts::PI));
        let shade = rng.random_range(0.85..1.15);
        splats.push(Splat {
            center: [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5, (a[2] + b[2]) * 0.5],
            rotation: [rot.w, rot.i, rot.j, rot.k],
            scale: [len * 0.25, thickness, thickness],
            color: [0.36 * shade, 0.25 * shade, 0.15 * shade],
            opacity: 0.92,
            label: SceneLabel::Branch,
        });
    };
    for k in 0..trunk_pieces {
        let z0 = trunk_top[2] * k as f64 / trunk_pieces as f64;
        let z1 = trunk_top[2] * (k + 1) as f64 / trunk_pieces as f64;
        push_segment(&mut rng, [0.0, 0.0, z0], [0.0, 0.0, z1], 0.06, &mut splats);
    }
    for _ in trunk_pieces..spec.trunk_segments {
        let start = [0.0, 0.0, trunk_top[2] * rng.random_range(0.6..1.1)];
        let end = uniform_in_ellipsoid(&mut rng, canopy, semi.map(|s| s * 0.85));
        push_segment(&mut rng, start, end, 0.025, &mut splats);
    }

    // fruits
    let mean_r = spec.fruit_radius_mean;
    let min_sep = 2.0 * mean_r;
    let radius_dist = Normal::new(mean_r, spec.fruit_radius_std).map_err(|e| Error::invalid(e.to_string()))?;
    let (r_lo, r_hi) = ((mean_r - 2.0 * spec.fruit_radius_std).max(0.5 * mean_r), mean_r + 2.0 * spec.fruit_radius_std);
    let fruit_semi = semi.map(|s| s - 1.5 * mean_r);
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(spec.fruit_count);
    let mut radii: Vec<f64> = Vec::with_capacity(spec.fruit_count);
    let max_attempts = 2000 * spec.fruit_count.max(1);
    let mut attempts = 0;
    let far_enough = |c: &[f64; 3], skip: usize, centers: &[[f64; 3]]| {
        centers.iter().enumerate().all(|(i, o)| i == skip || dist(c, o) >= min_sep)
    };
    while centers.len() < spec.fruit_count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Generation(format!(
                "placed {} of {} fruits within {} attempts; canopy too small for the separation constraint",
                centers.len(),
                spec.fruit_count,
                max_attempts
            )));
        }
        let r1 = radius_dist.sample(&mut rng).clamp(r_lo, r_hi);
        let c1 = uniform_in_ellipsoid(&mut rng, canopy, fruit_semi);
        let pair = centers.len() < 2 * spec.contact_pairs;
        if pair {
            let r2 = radius_dist.sample(&mut rng).clamp(r_lo, r_hi);
            let dir = unit_direction(&mut rng);
            let gap = (r1 + r2).max(min_sep);
            let c2 = [c1[0] + dir[0] * gap, c1[1] + dir[1] * gap, c1[2] + dir[2] * gap];
            if far_enough(&c1, usize::MAX, &centers) && far_enough(&c2, usize::MAX, &centers) {
                centers.extend([c1, c2]);
                radii.extend([r1, r2]);
            }
        } else if far_enough(&c1, usize::MAX, &centers) {
            centers.push(c1);
            radii.push(r1);
        }
    }
    // Fruit skins: flat splats tangent to the sphere at Fibonacci directions.
    for (c, &r) in centers.iter().zip(&radii) {
        let n = rng.random_range(24..=32usize);
        let rot = random_rotation(&mut rng);
        let orient = UnitQuaternion::from_quaternion(Quaternion::new(rot[0], rot[1], rot[2], rot[3]));
        let blush = rng.random_range(0.0..1.0);
        let base = [0.78 + 0.15 * blush, 0.12 + 0.35 * (1.0 - blush), 0.08];
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let tangent = FRUIT_TANGENT_SPREAD * r * (4.0 * std::f64::consts::PI / n as f64).sqrt();
        for k in 0..n {
            let y = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let rr = (1.0 - y * y).sqrt();
            let th = golden * k as f64;
            let d = orient * nalgebra::Vector3::new(rr * th.cos(), y, rr * th.sin());
            let facing = UnitQuaternion::rotation_between(&nalgebra::Vector3::z(), &d)
                .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&nalgebra::Vector3::x_axis(), std::f64::consts::PI));
            let jitter = rng.random_range(0.9..1.1);
            splats.push(Splat {
                center: [c[0] + d.x * r, c[1] + d.y * r, c[2] + d.z * r],
                rotation: [facing.w, facing.i, facing.j, facing.k],
                scale: [tangent, tangent, FRUIT_THICKNESS * r],
                color: base.map(|v: f64| (v * jitter).clamp(0.0, 1.0)),
                opacity: rng.random_range(0.75..1.0),
                label: SceneLabel::Fruit,
            });
        }
    }

    // foliage in clumps
    let clumps: Vec<[f64; 3]> = (0..(spec.foliage_gaussians / 40).max(1))
        .map(|_| uniform_in_ellipsoid(&mut rng, canopy, semi))
        .collect();
    let spread = Normal::new(0.0, 0.15).expect("valid sigma");
    for _ in 0..spec.foliage_gaussians {
        let clump = clumps[rng.random_range(0..clumps.len())];
        let center = [
            clump[0] + spread.sample(&mut rng),
            clump[1] + spread.sample(&mut rng),
            clump[2] + spread.sample(&mut rng),
        ];
        let mut scale = [rng.random_range(0.02..0.04), rng.random_range(0.012..0.025), rng.random_range(0.002..0.005)];
        let roll: f64 = rng.random_range(0.0..1.0);
        let (color, opacity) = if roll < spec.floater_fraction {
            scale = scale.map(|s| s * 3.0);
            ([0.3, 0.45, 0.3], rng.random_range(FLOATER_OPACITY.0..FLOATER_OPACITY.1))
        } else if roll < spec.floater_fraction + spec.distractor_fraction {
            (
                [rng.random_range(0.6..0.85), rng.random_range(0.15..0.35), rng.random_range(0.05..0.15)],
                rng.random_range(0.35..0.95),
            )
        } else {
            (
                [rng.random_range(0.08..0.3), rng.random_range(0.32..0.6), rng.random_range(0.05..0.2)],
                rng.random_range(0.35..0.95),
            )
        };
        splats.push(Splat {
            center,
            rotation: random_rotation(&mut rng),
            scale,
            color,
            opacity,
            label: SceneLabel::Foliage,
        });
    }

    let mut gaussians = Vec::with_capacity(splats.len());
    let mut labels = Vec::with_capacity(splats.len());
    for s in &splats {
        let base = codes.get(s.label);
        let amp = spec.code_noise * base.norm().as_f64();
        let mut code = Vec3::zeros();
        for k in 0..3 {
            let n: f64 = StandardNormal.sample(&mut rng);
            code[k] = base[k] + T::lit(amp * n);
        }
        let v3 = |a: [f64; 3]| Vec3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]));
        gaussians.push(Gaussian3D {
            center: v3(s.center),
            rotation: Quaternion::new(
                T::lit(s.rotation[0]),
                T::lit(s.rotation[1]),
                T::lit(s.rotation[2]),
                T::lit(s.rotation[3]),
            ),
            scale: v3(s.scale),
            color: v3(s.color),
            opacity: T::lit(s.opacity),
            codes: [code; 3],
        });
        labels.push(s.label);
    }
    let scene = Scene::new(gaussians, Vec3::new(T::lit(0.55), T::lit(0.7), T::lit(0.85)));
    Ok(GeneratedOrchard { scene, truth: GroundTruth::new(centers), labels })
}
