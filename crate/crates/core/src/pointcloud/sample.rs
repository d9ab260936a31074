use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CleanConfig, NormalConfig, PointCloud};
use crate::error::{Error, Result};
use crate::num::{Real, Vec3};
use crate::scene::{rotation_matrix, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ColorQuality {
    /// Exact Gaussian color.
    #[default]
    Ultra,
    /// 5 bits per channel.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub target_points: usize,
    pub min_opacity: f64,
    /// Samples farther than this many standard deviations are redrawn.
    pub truncation: f64,
    pub color_quality: ColorQuality,
    pub cleaning: CleanConfig,
    pub normals: NormalConfig,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            target_points: 2_100_000,
            min_opacity: 0.05,
            truncation: 2.0,
            color_quality: ColorQuality::Ultra,
            cleaning: CleanConfig::default(),
            normals: NormalConfig::default(),
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_points == 0 || !(0.0..=1.0).contains(&self.min_opacity) || !(self.truncation > 0.0) {
            return Err(Error::invalid("sampling needs target_points >= 1, min_opacity in [0, 1], truncation > 0"));
        }
        self.cleaning.validate()?;
        self.normals.validate()
    }
}

/// Largest-remainder apportionment of `total` proportional to `weights`.
/// Remainder ties go to the lower index.
pub fn allocate_counts<T: Real>(weights: &[T], total: usize) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(Error::invalid("allocation weights must be finite and non-negative"));
    }
    let sum = weights.iter().fold(T::zero(), |a, &b| a + b);
    if sum <= T::zero() {
        return Err(Error::invalid("allocation weights are all zero"));
    }
    let n = T::from_count(total);
    let mut counts = Vec::with_capacity(weights.len());
    let mut rest = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let q = n * w / sum;
        let f = q.floor();
        counts.push(f.as_f64() as usize);
        rest.push((q - f, i));
    }
    let assigned: usize = counts.iter().sum();
    // Floating point can push the floor sum one past the total when a quota
    // sits just below an integer.
    let mut missing = total.saturating_sub(assigned);
    let mut excess = assigned.saturating_sub(total);
    rest.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, i) in rest.iter() {
        if missing == 0 {
            break;
        }
        counts[i] += 1;
        missing -= 1;
    }
    for &(_, i) in rest.iter().rev() {
        if excess == 0 {
            break;
        }
        if counts[i] > 0 {
            counts[i] -= 1;
            excess -= 1;
        }
    }
    Ok(counts)
}

fn quantize<T: Real>(c: T) -> T {
    let levels = T::lit(31.0);
    (c.max(T::zero()).min(T::one()) * levels).round() / levels
}

/// Draws `target_points` points from the kept Gaussians, each Gaussian
/// receiving a share proportional to `σx·σy·σz·α`. Every Gaussian uses its
/// own random stream derived from `(seed, index)`, so the result does not
/// depend on thread scheduling.
pub fn sample_points<T: Real>(scene: &Scene<T>, kept: &[usize], config: &SampleConfig, seed: u64) -> Result<PointCloud<T>> {
    config.validate()?;
    if let Some(&bad) = kept.iter().find(|&&i| i >= scene.len()) {
        return Err(Error::invalid(format!("kept index {bad} outside scene of {}", scene.len())));
    }
    let min_opacity = T::lit(config.min_opacity);
    let eligible: Vec<usize> = kept.iter().copied().filter(|&i| scene.gaussians[i].opacity >= min_opacity).collect();
    if eligible.is_empty() {
        return Err(Error::Empty(format!("no kept Gaussian has opacity >= {}", config.min_opacity)));
    }
    let weights: Vec<T> =
        eligible.iter().map(|&i| scene.gaussians[i].volume_factor() * scene.gaussians[i].opacity).collect();
    let counts = allocate_counts(&weights, config.target_points)?;
    let k2 = T::lit(config.truncation * config.truncation);
    let chunks: Vec<PointCloud<T>> = eligible
        .par_iter()
        .zip(&counts)
        .map(|(&i, &n)| {
            let g = &scene.gaussians[i];
            let r = rotation_matrix(&g.rotation);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let color = match config.color_quality {
                ColorQuality::Ultra => g.color,
                ColorQuality::Standard => g.color.map(quantize),
            };
            let mut pc = PointCloud::default();
            while pc.positions.len() < n {
                let z = Vec3::<f64>::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                let z = z.map(T::lit);
                if z.norm_squared() > k2 {
                    continue;
                }
                pc.positions.push(g.center + r * z.component_mul(&g.scale));
            }
            pc.colors = vec![color; n];
            pc.source_index = vec![i as u32; n];
            pc
        })
        .collect();
    let mut cloud = PointCloud::default();
    for c in chunks {
        cloud.positions.extend(c.positions);
        cloud.colors.extend(c.colors);
        cloud.source_index.extend(c.source_index);
    }
    Ok(cloud)
}
