use std::path::Path;

use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};

use super::{Gaussian3D, Level, Scene};
use crate::error::{Error, Result};
use crate::num::{Real, Vec3};
use crate::ply::{read_ply, write_ply, PlyColumn, PlyTable};

/// How opacity, scale and color are encoded in an imported PLY.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PlyConvention {
    /// Linear opacity in `[0, 1]`, linear scales, `red green blue` in `[0, 1]`.
    #[default]
    #[serde(rename = "linear")]
    Linear,
    /// Common splatting export: logit opacity, log scales, SH DC color,
    /// `rot_0..3` / `scale_0..2` / `f_dc_0..2` property names.
    #[serde(rename = "3dgs")]
    Splat3dgs,
}

impl std::str::FromStr for PlyConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "3dgs" => Ok(Self::Splat3dgs),
            other => Err(Error::invalid(format!("unknown PLY convention `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneLoad<T: Real> {
    pub scene: Scene<T>,
    pub warnings: Vec<String>,
}

const BACKGROUND_TAG: &str = "background";
const SH_C0: f64 = 0.282_094_791_773_878_14;

fn lang_name(level: Level, k: usize) -> String {
    format!("lang_{}_{k}", level.tag())
}

pub fn load_scene_ply<T: Real>(path: &Path, convention: PlyConvention) -> Result<SceneLoad<T>> {
    let table = read_ply(path)?;
    scene_from_table(&table, convention)
}

fn scene_from_table<T: Real>(table: &PlyTable, convention: PlyConvention) -> Result<SceneLoad<T>> {
    let names: [&str; 14] = match convention {
        PlyConvention::Linear => [
            "x", "y", "z", "rot_w", "rot_x", "rot_y", "rot_z", "scale_x", "scale_y", "scale_z", "red", "green",
            "blue", "opacity",
        ],
        PlyConvention::Splat3dgs => [
            "x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3", "scale_0", "scale_1", "scale_2", "f_dc_0", "f_dc_1",
            "f_dc_2", "opacity",
        ],
    };
    let cols = names.iter().map(|n| table.require_float(n)).collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    let mut lang_cols: [Option<[usize; 3]>; 3] = [None; 3];
    for level in Level::ALL {
        let found: Vec<Option<usize>> = (0..3).map(|k| table.column_index(&lang_name(level, k))).collect();
        if found.iter().all(Option::is_some) {
            let mut idx = [0; 3];
            for k in 0..3 {
                idx[k] = table.require_float(&lang_name(level, k))?;
            }
            lang_cols[level.index()] = Some(idx);
        } else {
            let missing: Vec<String> =
                (0..3).filter(|&k| found[k].is_none()).map(|k| lang_name(level, k)).collect();
            warnings.push(format!("missing {}; level {level} codes default to zero", missing.join(", ")));
        }
    }

    let background = parse_background(&table.comments)?;

    let mut gaussians = Vec::with_capacity(table.rows);
    for row in 0..table.rows {
        let v = |i: usize| table.finite(row, cols[i]);
        let center = Vec3::new(T::lit(v(0)?), T::lit(v(1)?), T::lit(v(2)?));
        let mut q = [v(3)?, v(4)?, v(5)?, v(6)?];
        let mut scale = [v(7)?, v(8)?, v(9)?];
        let mut color = [v(10)?, v(11)?, v(12)?];
        let mut opacity = v(13)?;
        if convention == PlyConvention::Splat3dgs {
            let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if n == 0.0 {
                return Err(Error::parse(format!("vertex {row}"), "zero quaternion"));
            }
            q.iter_mut().for_each(|c| *c /= n);
            scale.iter_mut().for_each(|s| *s = s.exp());
            color.iter_mut().for_each(|c| *c = (0.5 + SH_C0 * *c).clamp(0.0, 1.0));
            opacity = 1.0 / (1.0 + (-opacity).exp());
        }
        let mut codes = [Vec3::zeros(); 3];
        for level in Level::ALL {
            if let Some(idx) = lang_cols[level.index()] {
                codes[level.index()] = Vec3::new(
                    T::lit(table.finite(row, idx[0])?),
                    T::lit(table.finite(row, idx[1])?),
                    T::lit(table.finite(row, idx[2])?),
                );
            }
        }
        let g = Gaussian3D {
            center,
            rotation: Quaternion::new(T::lit(q[0]), T::lit(q[1]), T::lit(q[2]), T::lit(q[3])),
            scale: Vec3::new(T::lit(scale[0]), T::lit(scale[1]), T::lit(scale[2])),
            color: Vec3::new(T::lit(color[0]), T::lit(color[1]), T::lit(color[2])),
            opacity: T::lit(opacity),
            codes,
        };
        // f32 storage rounds unit quaternions slightly off the unit sphere.
        validate_loaded(&g).map_err(|e| Error::parse(format!("vertex {row}"), e.to_string()))?;
        gaussians.push(g);
    }
    Ok(SceneLoad { scene: Scene { gaussians, background }, warnings })
}

fn validate_loaded<T: Real>(g: &Gaussian3D<T>) -> Result<()> {
    let norm = g.rotation.norm().as_f64();
    if (norm - 1.0).abs() > 1e-5 {
        return Err(Error::invalid(format!("quaternion norm {norm} is not 1")));
    }
    let mut probe = g.clone();
    probe.rotation = g.rotation.normalize();
    probe.validate()
}

fn parse_background<T: Real>(comments: &[String]) -> Result<Vec3<T>> {
    for c in comments {
        if let Some(rest) = c.strip_prefix(BACKGROUND_TAG) {
            let vals: Vec<f32> = rest
                .split_whitespace()
                .map(|s| s.parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse("header", "malformed background comment"))?;
            if vals.len() != 3 {
                return Err(Error::parse("header", "background comment needs 3 values"));
            }
            return Ok(Vec3::new(T::lit(vals[0] as f64), T::lit(vals[1] as f64), T::lit(vals[2] as f64)));
        }
    }
    Ok(Vec3::zeros())
}

/// Writes the scene as binary little-endian float32 properties.
pub fn save_scene_ply<T: Real>(scene: &Scene<T>, path: &Path) -> Result<()> {
    let col = |f: &dyn Fn(&Gaussian3D<T>) -> T| PlyColumn::F32(scene.gaussians.iter().map(|g| f(g).as_f32()).collect());
    let mut columns: Vec<(String, PlyColumn)> = vec![
        ("x".into(), col(&|g| g.center.x)),
        ("y".into(), col(&|g| g.center.y)),
        ("z".into(), col(&|g| g.center.z)),
        ("rot_w".into(), col(&|g| g.rotation.w)),
        ("rot_x".into(), col(&|g| g.rotation.i)),
        ("rot_y".into(), col(&|g| g.rotation.j)),
        ("rot_z".into(), col(&|g| g.rotation.k)),
        ("scale_x".into(), col(&|g| g.scale.x)),
        ("scale_y".into(), col(&|g| g.scale.y)),
        ("scale_z".into(), col(&|g| g.scale.z)),
        ("red".into(), col(&|g| g.color.x)),
        ("green".into(), col(&|g| g.color.y)),
        ("blue".into(), col(&|g| g.color.z)),
        ("opacity".into(), col(&|g| g.opacity)),
    ];
    for level in Level::ALL {
        for k in 0..3 {
            columns.push((lang_name(level, k), col(&|g| g.codes[level.index()][k])));
        }
    }
    let bg = scene.background;
    let comment = format!("{BACKGROUND_TAG} {:?} {:?} {:?}", bg.x.as_f32(), bg.y.as_f32(), bg.z.as_f32());
    let named: Vec<(&str, PlyColumn)> = columns.iter().map(|(n, c)| (n.as_str(), c.clone())).collect();
    write_ply(path, &[comment], &named)
}

/// Ground-truth fruit centers of a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub fruit_count: usize,
    pub centers: Vec<[f64; 3]>,
}

impl GroundTruth {
    pub fn new(centers: Vec<[f64; 3]>) -> Self {
        Self { fruit_count: centers.len(), centers }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fruit_count != self.centers.len() {
            return Err(Error::invalid(format!(
                "fruit_count {} does not match {} centers",
                self.fruit_count,
                self.centers.len()
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let gt: GroundTruth = serde_json::from_str(&text)?;
        gt.validate()?;
        Ok(gt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_gaussian() -> Gaussian3D<f32> {
        Gaussian3D {
            center: Vec3::new(0.0, 0.0, 0.0),
            rotation: Quaternion::identity(),
            scale: Vec3::new(1.0, 1.0, 1.0),
            color: Vec3::new(1.0, 1.0, 1.0),
            opacity: 1.0,
            codes: [Vec3::zeros(); 3],
        }
    }

    #[test]
    fn single_vertex_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.ply");
        let scene = Scene::new(vec![unit_gaussian()], Vec3::new(0.25, 0.5, 1.0));
        save_scene_ply(&scene, &path).unwrap();
        let loaded = load_scene_ply::<f32>(&path, PlyConvention::Linear).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.scene, scene);
    }

    #[test]
    fn missing_whole_level_defaults_to_zero_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.ply");
        let one = |v: f32| PlyColumn::F32(vec![v]);
        let mut cols = vec![
            ("x", one(1.0)),
            ("y", one(2.0)),
            ("z", one(3.0)),
            ("rot_w", one(1.0)),
            ("rot_x", one(0.0)),
            ("rot_y", one(0.0)),
            ("rot_z", one(0.0)),
            ("scale_x", one(0.5)),
            ("scale_y", one(0.5)),
            ("scale_z", one(0.5)),
            ("red", one(0.1)),
            ("green", one(0.2)),
            ("blue", one(0.3)),
            ("opacity", one(0.9)),
        ];
        for name in ["lang_s_0", "lang_s_1", "lang_s_2", "lang_p_0", "lang_p_1", "lang_p_2"] {
            cols.push((name, one(0.7)));
        }
        write_ply(&path, &[], &cols).unwrap();
        let loaded = load_scene_ply::<f64>(&path, PlyConvention::Linear).unwrap();
        let g = &loaded.scene.gaussians[0];
        assert_eq!(g.code(Level::Whole), &Vec3::zeros());
        assert!((g.code(Level::Part).x - 0.7).abs() < 1e-6);
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("lang_w_0"));
    }

    #[test]
    fn nan_field_names_vertex() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.ply");
        let mut g = unit_gaussian();
        g.center.y = f32::NAN;
        save_scene_ply(&Scene::new(vec![unit_gaussian(), g], Vec3::zeros()), &path).unwrap();
        let err = load_scene_ply::<f32>(&path, PlyConvention::Linear).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("vertex 1") && msg.contains("`y`"), "{msg}");
    }

    #[test]
    fn wrong_property_type_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("int.ply");
        write_ply(&path, &[], &[("x", PlyColumn::U32(vec![1]))]).unwrap();
        let err = load_scene_ply::<f32>(&path, PlyConvention::Linear).unwrap_err();
        assert!(err.to_string().contains("`x`"), "{err}");
    }

    #[test]
    fn splat_convention_applies_activations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gs.ply");
        let one = |v: f32| PlyColumn::F32(vec![v]);
        let cols = vec![
            ("x", one(0.0)),
            ("y", one(0.0)),
            ("z", one(0.0)),
            ("rot_0", one(2.0)),
            ("rot_1", one(0.0)),
            ("rot_2", one(0.0)),
            ("rot_3", one(0.0)),
            ("scale_0", one(0.0)),
            ("scale_1", one(1.0)),
            ("scale_2", one(-1.0)),
            ("f_dc_0", one(0.0)),
            ("f_dc_1", one(0.0)),
            ("f_dc_2", one(0.0)),
            ("opacity", one(0.0)),
        ];
        write_ply(&path, &[], &cols).unwrap();
        let g = &load_scene_ply::<f64>(&path, PlyConvention::Splat3dgs).unwrap().scene.gaussians[0];
        assert!((g.opacity - 0.5).abs() < 1e-12);
        assert!((g.scale.y - 1f64.exp()).abs() < 1e-6);
        assert!((g.rotation.w - 1.0).abs() < 1e-12);
        assert!((g.color.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ground_truth_json_shape() {
        let gt = GroundTruth::new(vec![[1.0, 2.0, 3.0]]);
        let v: serde_json::Value = serde_json::to_value(&gt).unwrap();
        assert_eq!(v["fruit_count"], 1);
        assert_eq!(v["centers"][0][2], 3.0);
        let bad = GroundTruth { fruit_count: 2, centers: vec![] };
        assert!(bad.validate().is_err());
    }
}
