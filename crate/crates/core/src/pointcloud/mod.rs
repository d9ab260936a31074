//! Dense colored point clouds sampled from Gaussians.

mod clean;
mod sample;

use std::path::Path;

pub use clean::{clean_outliers, estimate_normals, CleanConfig, CleanReport, NormalConfig, Normals};
pub use sample::{allocate_counts, sample_points, ColorQuality, SampleConfig};

use crate::error::{Error, Result};
use crate::num::{Real, Vec3};
use crate::ply::{read_ply, write_ply, PlyColumn};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud<T: Real> {
    pub positions: Vec<Vec3<T>>,
    pub colors: Vec<Vec3<T>>,
    pub normals: Option<Vec<Vec3<T>>>,
    /// Gaussian each point was drawn from.
    pub source_index: Vec<u32>,
}

impl<T: Real> PointCloud<T> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Keeps the listed points, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            colors: indices.iter().map(|&i| self.colors[i]).collect(),
            normals: self.normals.as_ref().map(|n| indices.iter().map(|&i| n[i]).collect()),
            source_index: indices.iter().map(|&i| self.source_index[i]).collect(),
        }
    }

    pub fn save_ply(&self, path: &Path) -> Result<()> {
        let col = |f: &dyn Fn(usize) -> T| PlyColumn::F32((0..self.len()).map(|i| f(i).as_f32()).collect());
        let mut columns = vec![
            ("x", col(&|i| self.positions[i].x)),
            ("y", col(&|i| self.positions[i].y)),
            ("z", col(&|i| self.positions[i].z)),
            ("red", col(&|i| self.colors[i].x)),
            ("green", col(&|i| self.colors[i].y)),
            ("blue", col(&|i| self.colors[i].z)),
        ];
        if let Some(n) = &self.normals {
            columns.push(("nx", col(&|i| n[i].x)));
            columns.push(("ny", col(&|i| n[i].y)));
            columns.push(("nz", col(&|i| n[i].z)));
        }
        columns.push(("source_index", PlyColumn::U32(self.source_index.clone())));
        write_ply(path, &[], &columns)
    }

    pub fn load_ply(path: &Path) -> Result<Self> {
        let table = read_ply(path)?;
        let cols: Vec<usize> =
            ["x", "y", "z", "red", "green", "blue"].iter().map(|n| table.require_float(n)).collect::<Result<_>>()?;
        let normal_cols = match table.column_index("nx") {
            Some(_) => Some(["nx", "ny", "nz"].iter().map(|n| table.require_float(n)).collect::<Result<Vec<_>>>()?),
            None => None,
        };
        let source = table.column_index("source_index");
        let mut pc = PointCloud::default();
        let mut normals = Vec::new();
        for r in 0..table.rows {
            let v = |c: usize| table.finite(r, c).map(T::lit);
            pc.positions.push(Vec3::new(v(cols[0])?, v(cols[1])?, v(cols[2])?));
            pc.colors.push(Vec3::new(v(cols[3])?, v(cols[4])?, v(cols[5])?));
            if let Some(nc) = &normal_cols {
                normals.push(Vec3::new(v(nc[0])?, v(nc[1])?, v(nc[2])?));
            }
            let s = match source {
                Some(c) => {
                    let s = table.value(r, c);
                    if !(s >= 0.0 && s <= u32::MAX as f64 && s.fract() == 0.0) {
                        return Err(Error::parse(format!("vertex {r}"), "bad source_index"));
                    }
                    s as u32
                }
                None => u32::MAX,
            };
            pc.source_index.push(s);
        }
        if normal_cols.is_some() {
            pc.normals = Some(normals);
        }
        Ok(pc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_round_trip_with_normals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let pc = PointCloud {
            positions: vec![Vec3::new(0.5, -1.25, 2.0), Vec3::new(1.0, 0.0, 0.0)],
            colors: vec![Vec3::new(1.0, 0.0, 0.5), Vec3::new(0.25, 0.25, 0.25)],
            normals: Some(vec![Vec3::z(), Vec3::x()]),
            source_index: vec![7, 4_000_000_000],
        };
        pc.save_ply(&path).unwrap();
        assert_eq!(PointCloud::<f64>::load_ply(&path).unwrap(), pc);
    }
}
