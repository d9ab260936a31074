mod common;

use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use splatcount::cluster::{
    align_to_template, cluster_volume, convex_hull_volume, count_instances, dbscan, hausdorff, split_cluster,
    ClusterLabel, DbscanParams, SplitConfig, Template, VolumeMethod,
};

use common::*;

fn sphere_surface(r: &mut rand_chacha::ChaCha8Rng, center: Vector3<f64>, radius: f64, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            let d = Vector3::new(StandardNormal.sample(r), StandardNormal.sample(r), StandardNormal.sample(r)).normalize();
            center + d * radius
        })
        .collect()
}

/// Volume of the hull by enumerating every point triple whose plane has all
/// other points on one side.
fn facet_hull_volume(points: &[Vector3<f64>]) -> f64 {
    let n = points.len();
    let inside = points.iter().sum::<Vector3<f64>>() / n as f64;
    let mut volume = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = (points[j] - points[i]).cross(&(points[k] - points[i]));
                if normal.norm() < 1e-12 {
                    continue;
                }
                let side = |p: &Vector3<f64>| normal.dot(&(p - points[i]));
                let (mut pos, mut neg) = (false, false);
                for (m, p) in points.iter().enumerate() {
                    if m == i || m == j || m == k {
                        continue;
                    }
                    let s = side(p);
                    pos |= s > 1e-12;
                    neg |= s < -1e-12;
                }
                if pos != neg {
                    volume += (points[i] - inside).dot(&normal).abs() / 6.0;
                }
            }
        }
    }
    volume
}

#[test]
fn hull_matches_facet_enumeration_and_is_rotation_invariant() {
    for s in 0..40u64 {
        let mut r = rng(1000 + s);
        let n = r.random_range(4..=50);
        let pts: Vec<Vector3<f64>> =
            (0..n).map(|_| Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect();
        let v = convex_hull_volume(&pts).unwrap();
        let oracle = facet_hull_volume(&pts);
        assert!((v - oracle).abs() < 1e-9, "seed {s}: {v} vs {oracle}");
        let rot = Rotation3::from_euler_angles(r.random_range(0.0..6.0), r.random_range(0.0..6.0), r.random_range(0.0..6.0));
        let turned: Vec<Vector3<f64>> = pts.iter().map(|p| rot * p).collect();
        assert!((convex_hull_volume(&turned).unwrap() - v).abs() < 1e-9);
    }
}

#[test]
fn voxel_volume_counts_occupied_cells() {
    let pts = [Vector3::new(0.1, 0.1, 0.1), Vector3::new(0.2, 0.2, 0.2), Vector3::new(1.5, 0.1, 0.1)];
    let est = cluster_volume(&pts, VolumeMethod::Voxel, 1.0);
    assert_eq!(est.volume, 2.0);
    assert!(!est.fell_back);
}

#[test]
fn hausdorff_examples_and_triangle_inequality() {
    let a = [Vector3::new(0.0, 0.0, 0.0)];
    let b = [Vector3::new(1.0, 0.0, 0.0)];
    assert_eq!(hausdorff(&a, &b).unwrap(), 1.0);
    assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    assert!(hausdorff::<f64>(&a, &[]).is_err());
    let mut r = rng(1100);
    for _ in 0..50 {
        let mut set = || -> Vec<Vector3<f64>> {
            (0..r.random_range(1..200)).map(|_| Vector3::new(r.random(), r.random(), r.random())).collect()
        };
        let (x, y, z) = (set(), set(), set());
        let (xy, yz, xz) = (hausdorff(&x, &y).unwrap(), hausdorff(&y, &z).unwrap(), hausdorff(&x, &z).unwrap());
        assert!(xz <= xy + yz + 1e-12);
        assert_eq!(xy, brute_hausdorff(&x, &y));
    }
}

#[test]
fn alignment_examples() {
    let t = Template::<f64>::sphere(1.0, 500).unwrap();
    let shifted: Vec<Vector3<f64>> = t.points.iter().map(|p| p + Vector3::new(1.0, 2.0, 3.0)).collect();
    let a = align_to_template(&shifted, &t, 500).unwrap();
    assert!((a.translation - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-9);
    assert!((a.scale.unwrap() - 1.0).abs() < 1e-9);
    assert!(a.residual < 1e-6);

    let doubled: Vec<Vector3<f64>> = t.points.iter().map(|p| p * 2.0).collect();
    assert!((align_to_template(&doubled, &t, 500).unwrap().scale.unwrap() - 2.0).abs() < 1e-9);

    let mut r = rng(1200);
    let noisy: Vec<Vector3<f64>> = t
        .points
        .iter()
        .map(|p| p + Vector3::new(r.random_range(-0.05..0.05), r.random_range(-0.05..0.05), r.random_range(-0.05..0.05)))
        .collect();
    assert!(align_to_template(&noisy, &t, 500).unwrap().residual < 0.15);
}

#[test]
fn twin_fruit_cluster_splits_in_two() {
    let rt = 0.05;
    let t = Template::<f64>::sphere(rt, 500).unwrap();
    let mut r = rng(1300);
    let mut pts = sphere_surface(&mut r, Vector3::zeros(), rt, 800);
    pts.extend(sphere_surface(&mut r, Vector3::new(2.5 * rt, 0.0, 0.0), rt, 800));
    let params = DbscanParams { eps: 0.6 * rt, min_samples: 20 };
    let clusters = dbscan(&pts, &params).unwrap();
    assert_eq!(clusters.clusters.len(), 1, "DBSCAN should merge the twins");
    let config = SplitConfig::default();
    let split = split_cluster(&pts, &t, &config, 1).unwrap();
    assert_eq!(split.parts.len(), 2);
    for part in &split.parts {
        let pp: Vec<Vector3<f64>> = part.iter().map(|&i| pts[i]).collect();
        assert!(align_to_template(&pp, &t, 500).unwrap().residual < config.hausdorff_tolerance);
    }
    let result = count_instances(&pts, &clusters.clusters, &t, &params, &config, 1).unwrap();
    assert_eq!(result.total, 2);
    assert_eq!(result.clusters[0].label, ClusterLabel::Compound);
}

#[test]
fn three_sphere_chain_recovers_centers() {
    let rt = 0.05;
    let t = Template::<f64>::sphere(rt, 500).unwrap();
    let mut r = rng(1400);
    let centers = [0.0, 2.5, 5.0].map(|x| Vector3::new(x * rt, 0.0, 0.0));
    let pts: Vec<Vector3<f64>> = centers.iter().flat_map(|c| sphere_surface(&mut r, *c, rt, 600)).collect();
    let split = split_cluster(&pts, &t, &SplitConfig::default(), 4).unwrap();
    assert_eq!(split.parts.len(), 3);
    for part in &split.parts {
        let c = part.iter().map(|&i| pts[i]).sum::<Vector3<f64>>() / part.len() as f64;
        let nearest = centers.iter().map(|t| (t - c).norm()).fold(f64::INFINITY, f64::min);
        assert!(nearest < 0.3 * rt, "part centroid {c:?} is {nearest} from the nearest center");
    }
}

#[test]
fn decision_table_rows() {
    let rt = 0.05;
    let t = Template::<f64>::sphere(rt, 500).unwrap();
    let mut r = rng(1500);
    let params = DbscanParams { eps: 0.6 * rt, min_samples: 5 };
    let config = SplitConfig::default();

    // an ordinary fruit
    let single = sphere_surface(&mut r, Vector3::zeros(), rt, 600);
    let c = dbscan(&single, &params).unwrap();
    let res = count_instances(&single, &c.clusters, &t, &params, &config, 0).unwrap();
    assert_eq!((res.total, res.clusters[0].label), (1, ClusterLabel::Single));

    // 1.4 V_T is below the split ratio: kept whole
    let big = sphere_surface(&mut r, Vector3::zeros(), rt * 1.4f64.cbrt(), 800);
    let c = dbscan(&big, &params).unwrap();
    let res = count_instances(&big, &c.clusters, &t, &params, &config, 0).unwrap();
    assert_eq!(res.total, 1);
    assert_ne!(res.clusters[0].label, ClusterLabel::Compound);

    // a flat patch: small volume, poor template fit
    let patch: Vec<Vector3<f64>> =
        (0..400).map(|_| Vector3::new(r.random_range(-rt..rt), r.random_range(-rt..rt), r.random_range(0.0..0.1 * rt))).collect();
    let c = dbscan(&patch, &params).unwrap();
    let res = count_instances(&patch, &c.clusters, &t, &params, &config, 0).unwrap();
    assert_eq!((res.total, res.clusters[0].label), (1, ClusterLabel::SmallFruit));
    assert!(res.clusters[0].low_confidence);

    // too few points
    let few = sphere_surface(&mut r, Vector3::zeros(), rt, config.small_fruit_min_points - 1);
    let c = dbscan(&few, &DbscanParams { eps: 3.0 * rt, min_samples: 1 }).unwrap();
    let res = count_instances(&few, &c.clusters, &t, &params, &config, 0).unwrap();
    assert_eq!((res.total, res.clusters[0].label), (0, ClusterLabel::Rejected));
}

#[test]
fn count_total_is_sum_of_gammas_and_round_trips() {
    let rt = 0.05;
    let t = Template::<f64>::sphere(rt, 500).unwrap();
    let mut r = rng(1600);
    let mut pts = Vec::new();
    for k in 0..6 {
        pts.extend(sphere_surface(&mut r, Vector3::new(k as f64 * 4.0 * rt, 0.0, 0.0), rt, 400));
    }
    pts.extend(sphere_surface(&mut r, Vector3::new(0.0, 1.0, 0.0), rt, 400));
    pts.extend(sphere_surface(&mut r, Vector3::new(2.5 * rt, 1.0, 0.0), rt, 400));
    let params = DbscanParams { eps: 0.6 * rt, min_samples: 20 };
    let c = dbscan(&pts, &params).unwrap();
    let res = count_instances(&pts, &c.clusters, &t, &params, &SplitConfig::default(), 9).unwrap();
    assert_eq!(res.total, res.clusters.iter().map(|c| c.gamma).sum::<usize>());
    assert_eq!(res.total, 8);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("count.json");
    res.save(&path).unwrap();
    assert_eq!(splatcount::cluster::CountResult::load(&path).unwrap(), res);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dbscan_matches_naive(seed in 0u64..10_000, n in 1usize..300, eps in 0.05f64..1.5, min_samples in 1usize..10) {
        let mut r = rng(seed);
        let pts: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::new(r.random_range(0.0..4.0), r.random_range(0.0..4.0), r.random_range(0.0..4.0))).collect();
        let got = dbscan(&pts, &DbscanParams { eps, min_samples }).unwrap();
        prop_assert_eq!(got.labels, naive_dbscan(&pts, eps, min_samples));
    }
}
