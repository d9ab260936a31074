use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{dist2, Real, Vec3};
use crate::spatial::{Cell, PointGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_samples: usize,
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) || self.min_samples == 0 {
            return Err(Error::invalid("dbscan needs eps > 0 and min_samples >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T: Real> {
    /// Point indices, ascending.
    pub indices: Vec<usize>,
    pub centroid: Vec3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T: Real> {
    pub clusters: Vec<Cluster<T>>,
    pub noise: Vec<usize>,
    /// Cluster id per point, `None` for noise.
    pub labels: Vec<Option<usize>>,
}

/// Density clustering with the classic expansion semantics: clusters are
/// numbered in order of their lowest-index core point, and a border point
/// joins the lowest-numbered cluster among its core neighbors, which is the
/// cluster that reaches it first when seeds are expanded in index order.
/// Neighborhoods are closed balls and include the point itself.
///
/// Computed as connected components of the core graph over a grid of cells
/// with side eps/2, so points sharing a cell are always neighbors and dense
/// clusters cost little more than a neighbor count per point.
pub fn dbscan<T: Real>(points: &[Vec3<T>], params: &DbscanParams) -> Result<Clustering<T>> {
    params.validate()?;
    let n = points.len();
    let eps = T::lit(params.eps);
    let eps2 = eps * eps;
    let grid = PointGrid::new(points, eps * T::lit(0.5));
    let mut offsets = Vec::with_capacity(125);
    for dx in -2..=2i64 {
        for dy in -2..=2i64 {
            for dz in -2..=2i64 {
                offsets.push([dx, dy, dz]);
            }
        }
    }
    let shift = |c: &Cell, o: &[i64; 3]| [c[0] + o[0], c[1] + o[1], c[2] + o[2]];

    let core: Vec<bool> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = grid.cell_of(&points[i]);
            let mut count = grid.cell_points(&c).len();
            if count >= params.min_samples {
                return true;
            }
            for o in offsets.iter().filter(|o| **o != [0, 0, 0]) {
                for &j in grid.cell_points(&shift(&c, o)) {
                    if dist2(&points[i], &points[j as usize]) <= eps2 {
                        count += 1;
                        if count >= params.min_samples {
                            return true;
                        }
                    }
                }
            }
            false
        })
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let cores_in = |c: &Cell| -> Vec<usize> {
        grid.cell_points(c).iter().map(|&j| j as usize).filter(|&j| core[j]).collect()
    };
    let cells = grid.cells();
    for c in &cells {
        let here = cores_in(c);
        let Some(&rep) = here.first() else { continue };
        for &j in &here[1..] {
            let (a, b) = (find(&mut parent, rep), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        }
        for o in &offsets {
            let d = shift(c, o);
            if d <= *c {
                continue;
            }
            let there = cores_in(&d);
            let Some(&other) = there.first() else { continue };
            if find(&mut parent, rep) == find(&mut parent, other) {
                continue;
            }
            let linked = here.iter().any(|&i| there.iter().any(|&j| dist2(&points[i], &points[j]) <= eps2));
            if linked {
                let (a, b) = (find(&mut parent, rep), find(&mut parent, other));
                parent[a.max(b)] = a.min(b);
            }
        }
    }

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut root_id: Vec<Option<usize>> = vec![None; n];
    let mut cluster_count = 0;
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            let id = *root_id[r].get_or_insert_with(|| {
                cluster_count += 1;
                cluster_count - 1
            });
            labels[i] = Some(id);
        }
    }
    let border: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .filter(|&i| !core[i])
        .filter_map(|i| {
            let c = grid.cell_of(&points[i]);
            offsets
                .iter()
                .flat_map(|o| grid.cell_points(&shift(&c, o)).iter().map(|&j| j as usize))
                .filter(|&j| core[j] && dist2(&points[i], &points[j]) <= eps2)
                .filter_map(|j| labels[j])
                .min()
                .map(|id| (i, id))
        })
        .collect();
    for (i, id) in border {
        labels[i] = Some(id);
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cluster_count];
    let mut noise = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) => members[*c].push(i),
            None => noise.push(i),
        }
    }
    let clusters = members
        .into_iter()
        .map(|indices| {
            let centroid = indices.iter().fold(Vec3::zeros(), |a, &i| a + points[i]) / T::from_count(indices.len());
            Cluster { indices, centroid }
        })
        .collect();
    Ok(Clustering { clusters, noise, labels })
}
