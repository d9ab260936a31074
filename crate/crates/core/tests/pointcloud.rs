mod common;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use splatcount::pointcloud::{
    allocate_counts, clean_outliers, estimate_normals, sample_points, CleanConfig, PointCloud, SampleConfig,
};
use splatcount::scene::{covariance_from, Gaussian3D, Scene};

fn cloud(points: Vec<Vector3<f64>>) -> PointCloud<f64> {
    let n = points.len();
    PointCloud { positions: points, colors: vec![Vector3::zeros(); n], normals: None, source_index: vec![0; n] }
}

fn no_cleaning(target_points: usize) -> SampleConfig {
    SampleConfig { target_points, cleaning: CleanConfig { enabled: false, ..CleanConfig::default() }, ..SampleConfig::default() }
}

/// Hamilton apportionment written out directly: floors first, then one
/// extra point each for the largest remainders, lower index first on ties.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(left) {
        counts[i] += 1;
    }
    counts
}

#[test]
fn allocation_matches_apportionment_oracle() {
    for s in 0..500u64 {
        let mut r = common::rng(2000 + s);
        let n = r.random_range(1..20);
        let weights: Vec<f64> = (0..n).map(|_| r.random_range(0.0..3.0)).collect();
        let total = r.random_range(0..=50);
        assert_eq!(allocate_counts(&weights, total).unwrap(), apportion(&weights, total), "seed {s}");
    }
    assert!(allocate_counts(&[0.0, 0.0], 5).is_err());
}

#[test]
fn three_to_one_and_empirical_proportionality() {
    let scene = Scene::new(
        vec![
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 0.0), 3f64.cbrt(), Vector3::new(1.0, 0.0, 0.0), 1.0),
            Gaussian3D::isotropic(Vector3::new(10.0, 0.0, 0.0), 1.0, Vector3::new(0.0, 1.0, 0.0), 1.0),
        ],
        Vector3::zeros(),
    );
    let pc = sample_points(&scene, &[0, 1], &no_cleaning(1000), 1).unwrap();
    let first = pc.source_index.iter().filter(|&&i| i == 0).count();
    assert_eq!((first, pc.len() - first), (750, 250));

    let mut r = common::rng(2100);
    let gaussians: Vec<Gaussian3D<f64>> = (0..10)
        .map(|k| {
            let mut g = Gaussian3D::isotropic(Vector3::new(k as f64, 0.0, 0.0), r.random_range(0.05..0.3), Vector3::zeros(), r.random_range(0.0..1.0));
            g.scale.x *= 1.5;
            g
        })
        .collect();
    let scene = Scene::new(gaussians, Vector3::zeros());
    let weights: Vec<f64> = scene
        .gaussians
        .iter()
        .map(|g| if g.opacity < 0.05 { 0.0 } else { covariance_from(&g.rotation, &g.scale).unwrap().determinant().sqrt() * g.opacity })
        .collect();
    let total: f64 = weights.iter().sum();
    let all: Vec<usize> = (0..10).collect();
    let pc = sample_points(&scene, &all, &no_cleaning(100_000), 2).unwrap();
    for (i, w) in weights.iter().enumerate() {
        let share = pc.source_index.iter().filter(|&&s| s as usize == i).count() as f64 / 100_000.0;
        assert!((share - w / total).abs() < 0.005, "gaussian {i}: {share} vs {}", w / total);
    }
}

#[test]
fn samples_respect_truncation_and_are_deterministic() {
    let mut r = common::rng(2200);
    let scene = common::random_scene(&mut r, 50);
    let all: Vec<usize> = (0..scene.len()).collect();
    let config = no_cleaning(20_000);
    let a = sample_points(&scene, &all, &config, 9).unwrap();
    let b = sample_points(&scene, &all, &config, 9).unwrap();
    assert_eq!(a.positions, b.positions);
    assert_eq!(a.source_index, b.source_index);
    for (p, &i) in a.positions.iter().zip(&a.source_index) {
        let g = &scene.gaussians[i as usize];
        let cov = covariance_from(&g.rotation, &g.scale).unwrap();
        let d = p - g.center;
        let m = (d.transpose() * cov.try_inverse().unwrap() * d)[0].sqrt();
        assert!(m <= config.truncation + 1e-9);
        assert_eq!(a.colors[0].len(), 3);
    }
    let single = sample_points(&scene, &[0], &no_cleaning(100), 1).unwrap();
    assert_eq!(single.len(), 100);
    assert!(single.colors.iter().all(|c| *c == scene.gaussians[0].color));
}

#[test]
fn cleaning_never_grows_and_drops_far_point() {
    let mut r = common::rng(2300);
    let mut pts: Vec<Vector3<f64>> = (0..2000).map(|_| Vector3::new(r.random(), r.random(), r.random())).collect();
    pts.push(Vector3::new(100.0, 100.0, 100.0));
    let (out, report) = clean_outliers(&cloud(pts.clone()), 16, 2.0);
    assert!(out.len() < pts.len());
    assert!(!out.positions.contains(&Vector3::new(100.0, 100.0, 100.0)));
    assert_eq!(report.removed, pts.len() - out.len());
    let (again, _) = clean_outliers(&out, 16, 2.0);
    assert!(again.len() <= out.len());
    let tiny = cloud(pts[..10].to_vec());
    assert_eq!(clean_outliers(&tiny, 16, 2.0).0.len(), 10);
}

#[test]
fn sphere_normals_are_radial() {
    let mut r = common::rng(2400);
    let pts: Vec<Vector3<f64>> = (0..2000)
        .map(|_| {
            let d: Vector3<f64> = Vector3::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r), StandardNormal.sample(&mut r));
            d.normalize()
        })
        .collect();
    let normals = estimate_normals(&cloud(pts.clone()), 16).unwrap();
    let close = pts
        .iter()
        .zip(&normals.normals)
        .filter(|(p, n)| n.dot(p).abs() >= 10f64.to_radians().cos())
        .count();
    assert!(close as f64 >= 0.95 * pts.len() as f64, "{close} of {}", pts.len());
    assert!(normals.normals.iter().all(|n| (n.norm() - 1.0).abs() < 1e-9));
}
