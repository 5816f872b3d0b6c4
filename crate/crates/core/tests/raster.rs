mod common;

use common::{gradient_mismatches, naive_render, random_scene, LinearProbe};
use nalgebra::Vector3;
use proptest::prelude::*;
use sparse_splat::raster::{render, render_backward, RenderSettings};
use sparse_splat::scene::{GaussianCloud, GaussianPrimitive, RigidTransform};
use sparse_splat::Error;

#[test]
fn matches_naive_compositor_bitwise() {
    let settings = RenderSettings::default();
    for seed in 0..5 {
        let (cloud, camera) = random_scene(100 + seed, 12, 40);
        let out = render(&cloud, &camera, &settings).unwrap();
        let naive = naive_render(&cloud, &camera, &settings);
        assert_eq!(out.color.data, naive.color, "seed {seed}");
        assert_eq!(out.depth.data, naive.depth, "seed {seed}");
        assert_eq!(out.alpha, naive.alpha, "seed {seed}");
    }
}

#[test]
fn gradients_match_finite_differences() {
    let settings = RenderSettings::default();
    for seed in 0..3 {
        let (cloud, camera) = random_scene(200 + seed, 5, 24);
        let probe = LinearProbe::new(seed, camera.pixel_count());
        let (checked, bad) = gradient_mismatches(&cloud, &camera, &settings, &probe, 1e-4, 1e-3, 1e-6);
        assert!(checked > 0);
        assert!(bad.is_empty(), "seed {seed}: {bad:?}");
    }
}

#[test]
fn gradients_without_smoothing_filter() {
    let settings = RenderSettings {
        smoothing_scale: 0.0,
        ..RenderSettings::default()
    };
    let (cloud, camera) = random_scene(7, 4, 24);
    let probe = LinearProbe::new(7, camera.pixel_count());
    let (_, bad) = gradient_mismatches(&cloud, &camera, &settings, &probe, 1e-4, 1e-3, 1e-6);
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn tile_size_does_not_change_output() {
    let (cloud, camera) = random_scene(3, 10, 37);
    let base = render(&cloud, &camera, &RenderSettings::default()).unwrap();
    for tile_size in [1, 5, 8, 64] {
        let s = RenderSettings {
            tile_size,
            ..RenderSettings::default()
        };
        let out = render(&cloud, &camera, &s).unwrap();
        assert_eq!(out, base, "tile size {tile_size}");
    }
}

#[test]
fn culled_scene_is_background() {
    let (cloud, camera) = random_scene(4, 5, 16);
    // Move the camera so that every primitive is behind it.
    let mut behind = camera.clone();
    behind.pose = RigidTransform::new(camera.pose.rotation, camera.pose.translation - Vector3::new(0.0, 0.0, 50.0));
    let out = render(&cloud, &behind, &RenderSettings::default()).unwrap();
    assert!(out.all_culled);
    assert!(out.color.data.iter().all(|&c| c == 0.0));
    assert!(out.alpha.iter().all(|&a| a == 0.0));
    let g = render_backward(&cloud, &behind, &RenderSettings::default(), &vec![1.0; 3 * 256], &vec![1.0; 256]).unwrap();
    assert!(g.primitives.iter().all(|p| p.is_zero()));
}

#[test]
fn empty_cloud_and_bad_gradient_shapes() {
    let (cloud, camera) = random_scene(5, 3, 16);
    let empty = GaussianCloud::new(Vec::new(), 0).unwrap();
    assert!(matches!(render(&empty, &camera, &RenderSettings::default()), Err(Error::EmptyCloud(_))));
    assert!(render_backward(&cloud, &camera, &RenderSettings::default(), &[0.0; 3], &[0.0; 1]).is_err());
}

#[test]
fn single_opaque_center_pixel() {
    // One primitive straight ahead: the center pixel sees its color scaled by
    // its footprint value, and depth is that weight times its view depth.
    let prim = GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, 4.0), 0.5, 0.9, Vector3::new(0.2, 0.4, 0.6), 0);
    let cloud = GaussianCloud::new(vec![prim], 0).unwrap();
    let camera = sparse_splat::scene::Camera::new(20.0, 9, 9, RigidTransform::identity()).unwrap();
    let out = render(&cloud, &camera, &RenderSettings::default()).unwrap();
    let i = 4 * 9 + 4;
    let a = out.alpha[i];
    assert!(a > 0.0 && a <= 0.9);
    let c = out.color.pixel(4, 4);
    assert!((c - Vector3::new(0.2, 0.4, 0.6) * a).norm() < 1e-12);
    assert!((out.depth.data[i] - 4.0 * a).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn alpha_bounded_and_deterministic(seed in 0u64..10_000) {
        let (cloud, camera) = random_scene(seed, 10, 20);
        let settings = RenderSettings::default();
        let a = render(&cloud, &camera, &settings).unwrap();
        prop_assert!(a.alpha.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(a.color.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let b = render(&cloud, &camera, &settings).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn permutation_invariant(seed in 0u64..10_000, rot in 1usize..9) {
        let (cloud, camera) = random_scene(seed, 10, 20);
        let settings = RenderSettings::default();
        let mut prims = cloud.primitives.clone();
        let r = rot % prims.len();
        prims.rotate_left(r);
        let shuffled = GaussianCloud::new(prims, cloud.sh_degree).unwrap();
        let a = render(&cloud, &camera, &settings).unwrap();
        let b = render(&shuffled, &camera, &settings).unwrap();
        // Random depths have no exact ties.
        prop_assert_eq!(a.color, b.color);
        prop_assert_eq!(a.depth, b.depth);
    }
}
