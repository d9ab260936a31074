use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{Error, Result};
use crate::num::{Mat3, Real, Vec3};
use crate::spatial::PointGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    pub enabled: bool,
    pub neighbors: usize,
    pub stddev_ratio: f64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self { enabled: true, neighbors: 16, stddev_ratio: 2.0 }
    }
}

impl CleanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbors == 0 || !(self.stddev_ratio >= 0.0) {
            return Err(Error::invalid("cleaning needs neighbors >= 1 and stddev_ratio >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalConfig {
    pub enabled: bool,
    pub neighbors: usize,
}

impl Default for NormalConfig {
    fn default() -> Self {
        Self { enabled: false, neighbors: 16 }
    }
}

impl NormalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbors < 2 {
            return Err(Error::invalid("normal estimation needs at least 2 neighbors"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CleanReport {
    pub removed: usize,
    pub mean_distance: f64,
    pub threshold: f64,
}

/// Statistical outlier removal: drops points whose mean distance to their
/// `neighbors` nearest neighbors exceeds `mean + stddev_ratio · stddev` of
/// that statistic over the cloud. Clouds with at most `neighbors` points are
/// returned unchanged.
pub fn clean_outliers<T: Real>(pc: &PointCloud<T>, neighbors: usize, stddev_ratio: f64) -> (PointCloud<T>, CleanReport) {
    if pc.len() <= neighbors || neighbors == 0 {
        return (pc.clone(), CleanReport { removed: 0, mean_distance: 0.0, threshold: f64::INFINITY });
    }
    let grid = PointGrid::new(&pc.positions, PointGrid::auto_cell(&pc.positions, neighbors));
    let k = T::from_count(neighbors);
    let mean_dist: Vec<T> = (0..pc.len())
        .into_par_iter()
        .map(|i| grid.nearest(&pc.positions[i], neighbors, Some(i)).iter().fold(T::zero(), |a, (d2, _)| a + d2.sqrt()) / k)
        .collect();
    let n = T::from_count(pc.len());
    let mean = mean_dist.iter().fold(T::zero(), |a, &b| a + b) / n;
    let var = mean_dist.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / n;
    let threshold = mean + T::lit(stddev_ratio) * var.sqrt();
    let keep: Vec<usize> = (0..pc.len()).filter(|&i| mean_dist[i] <= threshold).collect();
    let report = CleanReport { removed: pc.len() - keep.len(), mean_distance: mean.as_f64(), threshold: threshold.as_f64() };
    (pc.select(&keep), report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normals<T: Real> {
    /// Unit normals oriented toward +z; invalid entries hold `+z`.
    pub normals: Vec<Vec3<T>>,
    /// Points whose neighborhood spans fewer than two dimensions.
    pub invalid: Vec<usize>,
}

fn orient<T: Real>(n: Vec3<T>) -> Vec3<T> {
    let eps = T::lit(1e-12);
    let flip = if n.z.abs() > eps {
        n.z < T::zero()
    } else if n.y.abs() > eps {
        n.y < T::zero()
    } else {
        n.x < T::zero()
    };
    if flip {
        -n
    } else {
        n
    }
}

/// Local PCA normals from each point and its `neighbors` nearest neighbors.
pub fn estimate_normals<T: Real>(pc: &PointCloud<T>, neighbors: usize) -> Result<Normals<T>> {
    if pc.len() < neighbors + 1 {
        return Err(Error::invalid(format!("normal estimation needs more than {neighbors} points, got {}", pc.len())));
    }
    let grid = PointGrid::new(&pc.positions, PointGrid::auto_cell(&pc.positions, neighbors));
    let per_point: Vec<Option<Vec3<T>>> = (0..pc.len())
        .into_par_iter()
        .map(|i| {
            let mut hood: Vec<Vec3<T>> = vec![pc.positions[i]];
            hood.extend(grid.nearest(&pc.positions[i], neighbors, Some(i)).iter().map(|&(_, j)| pc.positions[j]));
            let m = T::from_count(hood.len());
            let c = hood.iter().fold(Vec3::zeros(), |a, p| a + p) / m;
            let cov = hood.iter().fold(Mat3::zeros(), |a, p| {
                let d = p - c;
                a + d * d.transpose()
            }) / m;
            let eig = SymmetricEigen::new(cov);
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
            let (lo, mid, hi) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
            let _ = lo;
            if !(hi > T::zero()) || mid <= hi * T::lit(1e-10) {
                return None;
            }
            Some(orient(eig.eigenvectors.column(order[0]).normalize()))
        })
        .collect();
    let mut out = Normals { normals: Vec::with_capacity(pc.len()), invalid: vec![] };
    for (i, n) in per_point.into_iter().enumerate() {
        match n {
            Some(n) => out.normals.push(n),
            None => {
                out.invalid.push(i);
                out.normals.push(Vec3::z());
            }
        }
    }
    Ok(out)
}
