mod common;

use nalgebra::{Quaternion, Vector3};
use proptest::prelude::*;
use splatcount::cluster::{dbscan, DbscanParams};
use splatcount::pointcloud::{sample_points, SampleConfig};
use splatcount::scene::{
    covariance_from, generate_orchard, load_scene_ply, save_scene_ply, Gaussian3D, LabelCodes, PlyConvention, Scene,
    SyntheticSceneSpec,
};

fn codes() -> LabelCodes<f64> {
    LabelCodes { fruit: Vector3::new(0.5, 0.1, 0.0), foliage: Vector3::new(0.0, 0.7, 0.2), branch: Vector3::new(0.1, 0.0, 0.9) }
}

fn random_f32_scene(seed: u64, n: usize) -> Scene<f32> {
    let mut r = common::rng(seed);
    let s = common::random_scene(&mut r, n);
    Scene::new(
        s.gaussians
            .iter()
            .map(|g| Gaussian3D {
                center: g.center.cast(),
                rotation: Quaternion::from_vector(g.rotation.coords.cast()),
                scale: g.scale.cast(),
                color: g.color.cast(),
                opacity: g.opacity as f32,
                codes: g.codes.map(|c| c.cast()),
            })
            .collect(),
        s.background.cast(),
    )
}

#[test]
fn ply_round_trip_is_exact_for_several_sizes() {
    let dir = tempfile::tempdir().unwrap();
    for n in [0, 1, 1000] {
        let scene = random_f32_scene(n as u64, n);
        let path = dir.path().join(format!("s{n}.ply"));
        save_scene_ply(&scene, &path).unwrap();
        let back = load_scene_ply::<f32>(&path, PlyConvention::Linear).unwrap();
        assert!(back.warnings.is_empty());
        assert_eq!(back.scene, scene);
    }
}

#[test]
fn generator_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSceneSpec::standard(40, 11);
    let a = generate_orchard(&spec, &codes()).unwrap();
    let b = generate_orchard(&spec, &codes()).unwrap();
    save_scene_ply(&a.scene, &dir.path().join("a.ply")).unwrap();
    save_scene_ply(&b.scene, &dir.path().join("b.ply")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("a.ply")).unwrap(), std::fs::read(dir.path().join("b.ply")).unwrap());
    assert_eq!(a.truth, b.truth);
    let other = generate_orchard(&SyntheticSceneSpec::standard(40, 12), &codes()).unwrap();
    assert_ne!(other.truth, a.truth);
}

#[test]
fn lone_fruit_yields_one_cluster() {
    let spec = SyntheticSceneSpec {
        foliage_gaussians: 0,
        trunk_segments: 0,
        ..SyntheticSceneSpec::standard(1, 5)
    };
    let orchard = generate_orchard(&spec, &codes()).unwrap();
    assert_eq!(orchard.truth.fruit_count, 1);
    let all: Vec<usize> = (0..orchard.scene.len()).collect();
    let cloud = sample_points(&orchard.scene, &all, &SampleConfig { target_points: 3000, ..SampleConfig::default() }, 0).unwrap();
    let params = DbscanParams { eps: 0.6 * spec.template_radius(), min_samples: 20 };
    assert_eq!(dbscan(&cloud.positions, &params).unwrap().clusters.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_is_symmetric_positive_definite(
        q in prop::array::uniform4(-1.0f64..1.0),
        s in prop::array::uniform3(1e-3f64..10.0),
    ) {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        prop_assume!(quat.norm() > 1e-3);
        let quat = quat / quat.norm();
        let cov = covariance_from(&quat, &Vector3::new(s[0], s[1], s[2])).unwrap();
        prop_assert!((cov - cov.transpose()).amax() < 1e-12);
        prop_assert!(cov.cholesky().is_some());
    }

    #[test]
    fn ply_round_trip_random_scenes(seed in 0u64..1_000_000, n in 0usize..40) {
        let dir = tempfile::tempdir().unwrap();
        let scene = random_f32_scene(seed, n);
        let path = dir.path().join("s.ply");
        save_scene_ply(&scene, &path).unwrap();
        prop_assert_eq!(load_scene_ply::<f32>(&path, PlyConvention::Linear).unwrap().scene, scene);
    }
}
