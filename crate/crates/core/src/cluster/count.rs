use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dbscan::{Cluster, DbscanParams};
use super::geometry::{cluster_volume, hausdorff, VolumeMethod};
use crate::error::{Error, Result};
use crate::num::{dist2, Real, Vec3};

pub const DEFAULT_TEMPLATE_POINTS: usize = 500;

/// Reference fruit shape in world units, centered on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Template<T: Real> {
    pub points: Vec<Vec3<T>>,
    pub radius: T,
}

impl<T: Real> Template<T> {
    /// Evenly spread points on a sphere of `radius`.
    pub fn sphere(radius: T, n: usize) -> Result<Self> {
        if !(radius > T::zero()) || n == 0 {
            return Err(Error::invalid("sphere template needs radius > 0 and at least one point"));
        }
        let golden = T::pi() * (T::lit(3.0) - T::lit(5.0).sqrt());
        let nn = T::from_count(n);
        let points = (0..n)
            .map(|k| {
                let y = T::one() - T::lit(2.0) * (T::from_count(k) + T::lit(0.5)) / nn;
                let r = (T::one() - y * y).max(T::zero()).sqrt();
                let th = golden * T::from_count(k);
                Vec3::new(r * th.cos(), y, r * th.sin()) * radius
            })
            .collect();
        Ok(Self { points, radius })
    }

    /// Template from arbitrary points; the radius is their RMS distance
    /// from the centroid.
    pub fn from_points(points: &[Vec3<T>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("template point set".into()));
        }
        let c = centroid(points);
        let centered: Vec<Vec3<T>> = points.iter().map(|p| p - c).collect();
        let radius = rms_radius(&centered, &Vec3::zeros());
        if !(radius > T::zero()) {
            return Err(Error::invalid("template points have no spread"));
        }
        Ok(Self { points: centered, radius })
    }

    /// `sphere:<radius>` or a path to a point-cloud PLY.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(r) = spec.strip_prefix("sphere:") {
            let r: f64 = r.parse().map_err(|_| Error::invalid(format!("bad sphere radius in {spec:?}")))?;
            return Self::sphere(T::lit(r), DEFAULT_TEMPLATE_POINTS);
        }
        let pc = crate::pointcloud::PointCloud::<T>::load_ply(Path::new(spec))?;
        Self::from_points(&pc.positions)
    }

    pub fn volume(&self) -> T {
        T::lit(4.0 / 3.0) * T::pi() * self.radius * self.radius * self.radius
    }
}

fn centroid<T: Real>(points: &[Vec3<T>]) -> Vec3<T> {
    points.iter().fold(Vec3::zeros(), |a, p| a + p) / T::from_count(points.len())
}

fn rms_radius<T: Real>(points: &[Vec3<T>], c: &Vec3<T>) -> T {
    (points.iter().fold(T::zero(), |a, p| a + dist2(p, c)) / T::from_count(points.len())).sqrt()
}

/// At most `max` points, taken at a fixed stride.
fn downsample<T: Real>(points: &[Vec3<T>], max: usize) -> Vec<Vec3<T>> {
    let stride = points.len().div_ceil(max.max(1)).max(1);
    points.iter().step_by(stride).copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment<T: Real> {
    pub translation: Vec3<T>,
    /// Cluster spread over template spread; `None` for a cluster without spread.
    pub scale: Option<T>,
    /// Hausdorff distance after alignment, in template radii; infinite when
    /// the scale is undefined.
    pub residual: T,
}

/// Aligns by centroid and RMS radius, then measures the Hausdorff distance
/// to the template on a strided subset of at most `max_points` points.
pub fn align_to_template<T: Real>(points: &[Vec3<T>], template: &Template<T>, max_points: usize) -> Result<Alignment<T>> {
    if points.is_empty() {
        return Err(Error::Empty("cannot align an empty cluster".into()));
    }
    let c = centroid(points);
    let tc = centroid(&template.points);
    let translation = c - tc;
    let spread = rms_radius(points, &c);
    let t_spread = rms_radius(&template.points, &tc);
    if !(spread > T::zero()) {
        return Ok(Alignment { translation, scale: None, residual: T::lit(f64::INFINITY) });
    }
    let scale = spread / t_spread;
    let aligned: Vec<Vec3<T>> = downsample(points, max_points).iter().map(|p| (p - c) / scale + tc).collect();
    let residual = hausdorff(&aligned, &template.points)? / template.radius;
    Ok(Alignment { translation, scale: Some(scale), residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Clusters above this multiple of the template volume are compound.
    pub volume_ratio_split: f64,
    /// Largest residual of a well-shaped fruit, in template radii.
    pub hausdorff_tolerance: f64,
    pub small_fruit_min_points: usize,
    pub max_split: usize,
    /// Subsample size for the residual and the volume estimate.
    pub downsample_for_hausdorff: usize,
    pub volume_method: VolumeMethod,
    pub kmeans_restarts: usize,
    pub kmeans_iterations: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            volume_ratio_split: 1.5,
            hausdorff_tolerance: 0.5,
            small_fruit_min_points: 8,
            max_split: 6,
            downsample_for_hausdorff: 500,
            volume_method: VolumeMethod::ConvexHull,
            kmeans_restarts: 5,
            kmeans_iterations: 50,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.volume_ratio_split > 0.0
            && self.hausdorff_tolerance > 0.0
            && self.small_fruit_min_points > 0
            && self.max_split >= 2
            && self.downsample_for_hausdorff > 0
            && self.kmeans_restarts > 0
            && self.kmeans_iterations > 0;
        if !ok {
            return Err(Error::invalid("split config values must be positive and max_split >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// Local point indices of each part.
    pub parts: Vec<Vec<usize>>,
    /// All points coincide; the cluster was kept whole.
    pub degenerate: bool,
}

/// Lloyd iterations from k-means++ seeds; returns assignments and inertia.
fn kmeans<T: Real>(points: &[Vec3<T>], k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, T) {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut nearest: Vec<T> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total = nearest.iter().fold(T::zero(), |a, &b| a + b);
        let next = if total > T::zero() {
            let mut target = T::lit(rng.random::<f64>()) * total;
            let mut pick = points.len() - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next]);
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(dist2(p, &points[next]));
        }
    }
    let mut assign = vec![0usize; points.len()];
    for it in 0..iterations {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let best = (0..k).min_by(|&x, &y| dist2(p, &centers[x]).partial_cmp(&dist2(p, &centers[y])).unwrap()).unwrap();
            changed |= best != *a;
            *a = best;
        }
        let mut sums = vec![Vec3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (a, p) in assign.iter().zip(points) {
            sums[*a] += p;
            counts[*a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c] / T::from_count(counts[c]);
            }
        }
        if !changed && it > 0 {
            break;
        }
    }
    let inertia = assign.iter().zip(points).fold(T::zero(), |acc, (a, p)| acc + dist2(p, &centers[*a]));
    (assign, inertia)
}

/// Best-of-restarts k-means partition with undersized parts merged into the
/// nearest remaining part.
fn kmeans_parts<T: Real>(points: &[Vec3<T>], k: usize, config: &SplitConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut best: Option<(Vec<usize>, T)> = None;
    for _ in 0..config.kmeans_restarts {
        let (assign, inertia) = kmeans(points, k, config.kmeans_iterations, rng);
        if best.as_ref().is_none_or(|b| inertia < b.1) {
            best = Some((assign, inertia));
        }
    }
    let assign = best.expect("at least one restart").0;
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        parts[a].push(i);
    }
    parts.retain(|p| !p.is_empty());
    while parts.len() >= 2 {
        let Some(small) = (0..parts.len())
            .filter(|&i| parts[i].len() < config.small_fruit_min_points)
            .min_by_key(|&i| (parts[i].len(), i))
        else {
            break;
        };
        let c: Vec<Vec3<T>> = parts.iter().map(|p| centroid(&p.iter().map(|&i| points[i]).collect::<Vec<_>>())).collect();
        let target = (0..parts.len())
            .filter(|&j| j != small)
            .min_by(|&a, &b| dist2(&c[small], &c[a]).partial_cmp(&dist2(&c[small], &c[b])).unwrap().then(a.cmp(&b)))
            .expect("two parts");
        let moved = std::mem::take(&mut parts[small]);
        parts[target].extend(moved);
        parts[target].sort_unstable();
        parts.remove(small);
    }
    parts
}

/// Whether a point set on its own would count as one fruit.
fn passes_single<T: Real>(points: &[Vec3<T>], template: &Template<T>, config: &SplitConfig) -> Result<bool> {
    if points.len() < config.small_fruit_min_points {
        return Ok(false);
    }
    let s = shape(points, template, config)?;
    Ok(s.volume <= T::lit(config.volume_ratio_split) * template.volume() && s.residual <= T::lit(config.hausdorff_tolerance))
}

/// Splits a compound cluster by restarted k-means.
///
/// The volume ratio `clamp(round(V / V_T), 2, max_split)` bounds the number
/// of parts from above; a convex hull overestimates the volume of elongated
/// groups, so every k from 2 up to the bound is tried and the partition with
/// the most template-passing parts wins (ties go to the smaller k).
pub fn split_cluster<T: Real>(points: &[Vec3<T>], template: &Template<T>, config: &SplitConfig, seed: u64) -> Result<Split> {
    config.validate()?;
    if points.is_empty() {
        return Err(Error::Empty("cannot split an empty cluster".into()));
    }
    if points.len() < 2 || points.iter().all(|p| *p == points[0]) {
        return Ok(Split { parts: vec![(0..points.len()).collect()], degenerate: true });
    }
    let ratio = (subsampled_volume(points, template, config) / template.volume()).as_f64();
    let k_max = (ratio.round() as usize).clamp(2, config.max_split).min(points.len());
    let mut best: Option<(usize, Vec<Vec<usize>>)> = None;
    for k in 2..=k_max {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let parts = kmeans_parts(points, k, config, &mut rng);
        let mut passing = 0;
        for part in &parts {
            let pp: Vec<Vec3<T>> = part.iter().map(|&i| points[i]).collect();
            passing += usize::from(passes_single(&pp, template, config)?);
        }
        if best.as_ref().is_none_or(|b| passing > b.0) {
            best = Some((passing, parts));
        }
    }
    let parts = best.expect("k_max >= 2").1;
    Ok(Split { parts, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterLabel {
    Single,
    SmallFruit,
    Compound,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub gamma: usize,
    pub label: ClusterLabel,
    pub volume: f64,
    /// `null` when the cluster has no spread.
    pub residual: Option<f64>,
    pub centroid: [f64; 3],
    pub points: usize,
    #[serde(default)]
    pub low_confidence: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parts: Option<Vec<PartReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartReport {
    pub points: usize,
    pub volume: f64,
    pub residual: Option<f64>,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountParams {
    pub template_radius: f64,
    pub template_volume: f64,
    pub dbscan: DbscanParams,
    pub split: SplitConfig,
    pub seed: u64,
    /// Full run configuration, when the count came from a pipeline run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    pub total: usize,
    pub clusters: Vec<ClusterReport>,
    pub params: CountParams,
}

impl CountResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

struct Shape<T: Real> {
    volume: T,
    residual: T,
}

/// Volume of a strided subsample, so the estimate does not creep outward as
/// denser sampling reaches further into the truncated splat tails.
fn subsampled_volume<T: Real>(points: &[Vec3<T>], template: &Template<T>, config: &SplitConfig) -> T {
    let sub = downsample(points, config.downsample_for_hausdorff);
    cluster_volume(&sub, config.volume_method, template.radius / T::lit(4.0)).volume
}

fn shape<T: Real>(points: &[Vec3<T>], template: &Template<T>, config: &SplitConfig) -> Result<Shape<T>> {
    let volume = subsampled_volume(points, template, config);
    let residual = align_to_template(points, template, config.downsample_for_hausdorff)?.residual;
    Ok(Shape { volume, residual })
}

/// Applies the per-cluster decision table and sums the instance counts.
///
/// | points < min | V ≤ ratio·V_T | residual ≤ δ | label        | γ |
/// |--------------|---------------|--------------|--------------|---|
/// | yes          |               |              | rejected     | 0 |
/// | no           | yes           | yes          | single       | 1 |
/// | no           | yes           | no           | small fruit  | 1 (low confidence) |
/// | no           | no            |              | compound     | passing parts, at least 2 |
pub fn count_instances<T: Real>(
    points: &[Vec3<T>],
    clusters: &[Cluster<T>],
    template: &Template<T>,
    dbscan: &DbscanParams,
    config: &SplitConfig,
    seed: u64,
) -> Result<CountResult> {
    config.validate()?;
    let max_volume = T::lit(config.volume_ratio_split) * template.volume();
    let tol = T::lit(config.hausdorff_tolerance);
    let reports: Vec<Result<ClusterReport>> = clusters
        .par_iter()
        .enumerate()
        .map(|(ci, cluster)| {
            let pts: Vec<Vec3<T>> = cluster.indices.iter().map(|&i| points[i]).collect();
            let c = cluster.centroid;
            let mut report = ClusterReport {
                gamma: 0,
                label: ClusterLabel::Rejected,
                volume: 0.0,
                residual: None,
                centroid: [c.x.as_f64(), c.y.as_f64(), c.z.as_f64()],
                points: pts.len(),
                low_confidence: false,
                parts: None,
            };
            if pts.len() < config.small_fruit_min_points {
                return Ok(report);
            }
            let s = shape(&pts, template, config)?;
            report.volume = s.volume.as_f64();
            report.residual = finite(s.residual.as_f64());
            if s.volume <= max_volume {
                report.gamma = 1;
                if s.residual <= tol {
                    report.label = ClusterLabel::Single;
                } else {
                    report.label = ClusterLabel::SmallFruit;
                    report.low_confidence = true;
                }
                return Ok(report);
            }
            report.label = ClusterLabel::Compound;
            let split = split_cluster(&pts, template, config, seed.wrapping_add(ci as u64))?;
            if split.degenerate {
                report.gamma = 1;
                report.low_confidence = true;
                return Ok(report);
            }
            let mut parts = Vec::with_capacity(split.parts.len());
            for part in &split.parts {
                let pp: Vec<Vec3<T>> = part.iter().map(|&i| pts[i]).collect();
                let ps = shape(&pp, template, config)?;
                let passes = pp.len() >= config.small_fruit_min_points && ps.volume <= max_volume && ps.residual <= tol;
                parts.push(PartReport {
                    points: pp.len(),
                    volume: ps.volume.as_f64(),
                    residual: finite(ps.residual.as_f64()),
                    passes,
                });
            }
            report.gamma = parts.iter().filter(|p| p.passes).count().max(2);
            report.parts = Some(parts);
            Ok(report)
        })
        .collect();
    let clusters = reports.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CountResult {
        total: clusters.iter().map(|c| c.gamma).sum(),
        clusters,
        params: CountParams {
            template_radius: template.radius.as_f64(),
            template_volume: template.volume().as_f64(),
            dbscan: *dbscan,
            split: config.clone(),
            seed,
            config: None,
        },
    })
}
