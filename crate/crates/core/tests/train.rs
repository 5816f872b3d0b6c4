use nalgebra::Vector3;

use sparse_splat::io::{synth, SceneBundle, SynthSpec};
use sparse_splat::scene::GaussianCloud;
use sparse_splat::train::{train, LearningRates, TrainConfig, TrainViews, ViewSchedule};
use sparse_splat::Error;

fn small_scene() -> (SceneBundle, GaussianCloud) {
    let spec = SynthSpec {
        primitives: 30,
        cameras: 3,
        width: 32,
        height: 24,
        focal: 30.0,
        ..SynthSpec::default()
    };
    let bundle = synth(&spec, 4).unwrap();
    let mut start = bundle.ground_truth.clone().unwrap();
    for (k, p) in start.primitives.iter_mut().enumerate() {
        p.position += Vector3::new(0.03, -0.02, 0.01) * ((k % 3) as f64 - 1.0);
        p.opacity_logit -= 0.5;
    }
    (bundle, start)
}

fn views(b: &SceneBundle) -> TrainViews<'_> {
    TrainViews {
        cameras: &b.train.cameras,
        images: &b.train.images,
        depths: &b.train.depths,
    }
}

fn config(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        loss: sparse_splat::loss::LossConfig {
            patch_size: 8,
            ..Default::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn one_iteration_one_record() {
    let (bundle, cloud) = small_scene();
    let (_, log) = train(cloud, &views(&bundle), &config(1)).unwrap();
    assert_eq!(log.records.len(), 1);
    let r = &log.records[0];
    assert_eq!((r.iteration, r.view), (0, 0));
    assert!(r.total.is_finite() && r.rgb > 0.0);
    assert!(log.initial_rgb.is_some() && log.final_rgb.is_some());
}

#[test]
fn zero_rates_leave_cloud_unchanged() {
    let (bundle, cloud) = small_scene();
    let cfg = TrainConfig {
        learning_rates: LearningRates {
            position: 0.0,
            position_final: 0.0,
            rotation: 0.0,
            log_scales: 0.0,
            opacity: 0.0,
            sh: 0.0,
        },
        ..config(5)
    };
    let (out, log) = train(cloud.clone(), &views(&bundle), &cfg).unwrap();
    assert_eq!(out, cloud);
    assert_eq!(log.initial_rgb, log.final_rgb);
}

#[test]
fn loss_decreases_on_small_scene() {
    let (bundle, cloud) = small_scene();
    let (_, log) = train(cloud, &views(&bundle), &config(60)).unwrap();
    assert!(log.final_rgb.unwrap() < log.initial_rgb.unwrap());
}

#[test]
fn deterministic_across_runs_and_thread_counts() {
    let (bundle, cloud) = small_scene();
    let cfg = TrainConfig {
        schedule: ViewSchedule::Random,
        seed: 17,
        ..config(12)
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(cloud.clone(), &views(&bundle), &cfg).unwrap())
    };
    let (a, la) = run(1);
    let (b, lb) = run(3);
    let (c, _) = run(1);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(la.totals(), lb.totals());
    let order: Vec<usize> = la.records.iter().map(|r| r.view).collect();
    assert_eq!(order, lb.records.iter().map(|r| r.view).collect::<Vec<_>>());
}

#[test]
fn invalid_config_aborts_with_input_cloud() {
    let (bundle, cloud) = small_scene();
    let cfg = TrainConfig {
        iterations: 0,
        ..config(1)
    };
    let abort = train(cloud.clone(), &views(&bundle), &cfg).unwrap_err();
    assert!(matches!(abort.error, Error::Config(_)));
    assert_eq!(abort.cloud, cloud);
    assert!(abort.log.records.is_empty());
}

#[test]
fn diverging_rates_report_last_finite_cloud() {
    let (bundle, cloud) = small_scene();
    let cfg = TrainConfig {
        learning_rates: LearningRates {
            log_scales: 1e200,
            ..LearningRates::default()
        },
        ..config(20)
    };
    match train(cloud, &views(&bundle), &cfg) {
        Ok((c, _)) => assert!(c.is_finite()),
        Err(abort) => {
            assert!(matches!(abort.error, Error::Diverged(_) | Error::EmptyCloud(_) | Error::InvalidParameter(_)), "{:?}", abort.error);
            assert!(abort.cloud.is_finite());
        }
    }
}
